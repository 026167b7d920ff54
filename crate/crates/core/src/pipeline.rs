//! Cycle-accurate, bit-exact model of the systolic-array pipeline.
//!
//! Dataflow of an `R x C` weight-stationary array:
//!
//! ```text
//!   a_r -> [skew chain, r+1 regs] -> MAC(r,0) -> sa-reg-h -> MAC(r,1) -> ...
//!                                      |                       |
//!                                   sa-reg-v                sa-reg-v
//!                                      v                       v
//!                                    MAC(r+1,0)             MAC(r+1,1)
//!   bottom row -> [deskew chain, C-c regs] -> accum -> round -> nlf -> out
//! ```
//!
//! Every register is a plain D flip-flop group captured on one global clock
//! edge. MACs are combinational. The accumulator, round and NLF registers
//! are enable-gated by the schedule; everything inside the array free-runs.
//!
//! Timing (state index `s` = value held during cycle `s`, `s = 0` right
//! after preload). Activation vector `v` enters the skew chains on the edge
//! leaving cycle `v`, MAC(r,c) consumes it during cycle `v + r + c + 1`, and
//! every column sum of it sits at the end of its deskew chain during cycle
//! `v + R + C`. With `P` passes per iteration, iteration `j` owns vectors
//! `jP .. jP + P`; its accumulation completes in cycle `R + C + (j+1)P`,
//! the round register holds it one cycle later and the NLF register one
//! cycle after that, which is the readout cycle `jP + T - 1` with
//! `T = R + C + P + 3`.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::golden::{ActivationVector, NlfTable, OutputVector, Tile};
use crate::quant::{round_shift_clip, ShiftAmount};
use crate::registry::{FlipFlopId, Geometry, RegGroup};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub geometry: Geometry,
    pub passes: usize,
    pub shift: ShiftAmount,
    pub nlf: NlfTable,
}

impl PipelineConfig {
    pub fn new(rows: usize, cols: usize, passes: usize, shift: ShiftAmount) -> Result<Self> {
        if passes == 0 {
            return Err(Error::ZeroPasses);
        }
        Ok(Self {
            geometry: Geometry::new(rows, cols)?,
            passes,
            shift,
            nlf: NlfTable::relu(),
        })
    }

    pub fn with_nlf(mut self, nlf: NlfTable) -> Self {
        self.nlf = nlf;
        self
    }

    pub fn rows(&self) -> usize {
        self.geometry.rows
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols
    }

    /// Length of one iteration's window.
    pub fn window(&self) -> u32 {
        Schedule::new(self.geometry, self.passes, 1).window()
    }
}

/// How the accumulator treats an arriving column sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    /// `accum <- accum + sum`
    Accumulate,
    /// `accum <- bias + sum`: first pass of every iteration after the first
    /// one, whose bias was preloaded at reset.
    ReloadBias,
}

/// Enables and strobes for the edge leaving one cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Control {
    pub arrival: Option<Arrival>,
    pub round_latch: bool,
    pub nlf_latch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Preload,
    Stream,
    Drain,
    PostProcess,
}

/// Static schedule of `iterations` back-to-back iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    rows: u32,
    cols: u32,
    passes: u32,
    iterations: u32,
}

impl Schedule {
    pub fn new(geometry: Geometry, passes: usize, iterations: usize) -> Self {
        Self {
            rows: geometry.rows as u32,
            cols: geometry.cols as u32,
            passes: passes as u32,
            iterations: iterations as u32,
        }
    }

    pub fn passes(&self) -> u32 {
        self.passes
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    /// `T = R + C + P + 3` cycles: preload, `R + C + P` cycles of
    /// stream/drain, then one cycle each for the round and NLF registers.
    pub fn window(&self) -> u32 {
        self.rows + self.cols + self.passes + 3
    }

    /// First cycle of iteration `j`'s window.
    pub fn iteration_start(&self, j: u32) -> u32 {
        j * self.passes
    }

    /// The cycle during which iteration `j`'s result is read from the NLF
    /// registers.
    pub fn readout_cycle(&self, j: u32) -> u32 {
        self.iteration_start(j) + self.window() - 1
    }

    /// Number of cycles simulated, readout of the last iteration included.
    pub fn total_cycles(&self) -> u32 {
        self.readout_cycle(self.iterations - 1) + 1
    }

    /// The cycle during which every column sum of vector `v` sits at the
    /// end of its deskew chain.
    pub fn arrival_cycle(&self, vector: u32) -> u32 {
        vector + self.rows + self.cols
    }

    /// Index of the activation vector entering the skew chains on the edge
    /// leaving `cycle`.
    pub fn input_vector(&self, cycle: u32) -> Option<usize> {
        (cycle < self.iterations * self.passes).then_some(cycle as usize)
    }

    /// Iteration whose accumulation is complete during `cycle`.
    pub fn completed(&self, cycle: u32) -> Option<u32> {
        let u = cycle.checked_sub(self.rows + self.cols + self.passes)?;
        (u % self.passes == 0 && u / self.passes < self.iterations).then_some(u / self.passes)
    }

    /// Iteration read out during `cycle`.
    pub fn readout(&self, cycle: u32) -> Option<u32> {
        let u = cycle.checked_sub(self.window() - 1)?;
        (u % self.passes == 0 && u / self.passes < self.iterations).then_some(u / self.passes)
    }

    pub fn control(&self, cycle: u32) -> Control {
        let arrival = cycle
            .checked_sub(self.rows + self.cols)
            .filter(|&u| u < self.iterations * self.passes)
            .map(|u| {
                if u % self.passes == 0 && u > 0 {
                    Arrival::ReloadBias
                } else {
                    Arrival::Accumulate
                }
            });
        Control {
            arrival,
            round_latch: self.completed(cycle).is_some(),
            nlf_latch: cycle > 0 && self.completed(cycle - 1).is_some(),
        }
    }

    /// Coarse phase of `cycle` within a single isolated iteration.
    pub fn phase(&self, cycle: u32) -> Phase {
        let stream_end = self.iterations * self.passes;
        let drain_end = self.rows + self.cols + self.iterations * self.passes;
        if cycle == 0 {
            Phase::Preload
        } else if cycle <= stream_end {
            Phase::Stream
        } else if cycle <= drain_end {
            Phase::Drain
        } else {
            Phase::PostProcess
        }
    }
}

/// Complete register file. 8-bit registers hold sign-extended int8 values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineState {
    geometry: Geometry,
    cycle: u32,
    regs: [Vec<i32>; 8],
}

impl PipelineState {
    pub fn new(geometry: Geometry) -> Self {
        let regs = RegGroup::ALL.map(|g| vec![0; geometry.registers(g)]);
        Self {
            geometry,
            cycle: 0,
            regs,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn cycle(&self) -> u32 {
        self.cycle
    }

    pub fn group(&self, group: RegGroup) -> &[i32] {
        &self.regs[group.index()]
    }

    pub fn get(&self, group: RegGroup, row: usize, col: usize, chain_pos: usize) -> Option<i32> {
        let slot = self.geometry.slot(group, row, col, chain_pos)?;
        Some(self.regs[group.index()][slot])
    }

    /// Direct register write; values are truncated to the register width.
    pub fn set(
        &mut self,
        group: RegGroup,
        row: usize,
        col: usize,
        chain_pos: usize,
        value: i32,
    ) -> Result<()> {
        let slot =
            self.geometry
                .slot(group, row, col, chain_pos)
                .ok_or(Error::InvalidFlipFlop {
                    group,
                    row,
                    col,
                    chain_pos,
                    bit: 0,
                })?;
        self.regs[group.index()][slot] = if group.width() == 8 {
            value as i8 as i32
        } else {
            value
        };
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.regs.iter().all(|g| g.iter().all(|&v| v == 0))
    }

    /// Zero every register, then load weights and biases.
    pub fn reset_and_preload(&mut self, tile: &Tile) -> Result<()> {
        let g = self.geometry;
        if tile.rows() != g.rows || tile.cols() != g.cols {
            return Err(Error::DimensionMismatch {
                what: "tile shape (rows*cols)",
                expected: g.rows * g.cols,
                actual: tile.rows() * tile.cols(),
            });
        }
        self.cycle = 0;
        for regs in &mut self.regs {
            regs.fill(0);
        }
        for (slot, &w) in self.regs[RegGroup::WReg.index()]
            .iter_mut()
            .zip(tile.weights())
        {
            *slot = w as i32;
        }
        for (slot, &b) in self.regs[RegGroup::AccumReg.index()]
            .iter_mut()
            .zip(tile.biases())
        {
            *slot = b;
        }
        Ok(())
    }

    /// XOR one stored bit.
    pub fn flip_bit(&mut self, ff: &FlipFlopId) -> Result<()> {
        let slot = self.geometry.locate(ff)?;
        let v = &mut self.regs[ff.group.index()][slot];
        *v = if ff.group.width() == 8 {
            ((*v as u8) ^ (1u8 << ff.bit)) as i8 as i32
        } else {
            ((*v as u32) ^ (1u32 << ff.bit)) as i32
        };
        Ok(())
    }

    /// One synchronous clock edge. `next` is scratch space of the same
    /// geometry; it ends up holding the previous state.
    pub fn step(
        &mut self,
        next: &mut PipelineState,
        activations: Option<&[i8]>,
        biases: &[i32],
        control: Control,
        shift: ShiftAmount,
        nlf: &NlfTable,
    ) {
        debug_assert_eq!(self.geometry, next.geometry);
        let Geometry { rows, cols } = self.geometry;
        let cur = &self.regs;
        let nx = &mut next.regs;
        let [h_i, w_i, sh_i, v_i, fv_i, acc_i, rnd_i, nlf_i] = RegGroup::ALL.map(RegGroup::index);

        for r in 0..rows {
            let base = Geometry::hchain_base(r);
            nx[h_i][base] = activations.map_or(0, |a| a[r] as i32);
            for k in 1..=r {
                nx[h_i][base + k] = cur[h_i][base + k - 1];
            }
        }

        nx[w_i].copy_from_slice(&cur[w_i]);

        for r in 0..rows {
            let feed = cur[h_i][Geometry::hchain_base(r) + r];
            for c in 0..cols {
                let a = if c == 0 {
                    feed
                } else {
                    cur[sh_i][r * (cols - 1) + c - 1]
                };
                let w = cur[w_i][r * cols + c];
                let psum_in = if r == 0 {
                    0
                } else {
                    cur[v_i][(r - 1) * cols + c]
                };
                let psum = psum_in.wrapping_add(a * w);
                if c + 1 < cols {
                    nx[sh_i][r * (cols - 1) + c] = a;
                }
                if r + 1 < rows {
                    nx[v_i][r * cols + c] = psum;
                } else {
                    nx[fv_i][self.geometry.vchain_base(c)] = psum;
                }
            }
        }

        for c in 0..cols {
            let base = self.geometry.vchain_base(c);
            let len = cols - c;
            for k in 1..len {
                nx[fv_i][base + k] = cur[fv_i][base + k - 1];
            }
            let sum = cur[fv_i][base + len - 1];
            nx[acc_i][c] = match control.arrival {
                None => cur[acc_i][c],
                Some(Arrival::Accumulate) => cur[acc_i][c].wrapping_add(sum),
                Some(Arrival::ReloadBias) => biases[c].wrapping_add(sum),
            };
            nx[rnd_i][c] = if control.round_latch {
                round_shift_clip(cur[acc_i][c], shift) as i32
            } else {
                cur[rnd_i][c]
            };
            nx[nlf_i][c] = if control.nlf_latch {
                nlf.lookup(cur[rnd_i][c] as i8) as i32
            } else {
                cur[nlf_i][c]
            };
        }

        next.cycle = self.cycle + 1;
        std::mem::swap(&mut self.regs, &mut next.regs);
        std::mem::swap(&mut self.cycle, &mut next.cycle);
    }

    /// One line per register: `cycle group row col chain_pos value`.
    pub fn write_trace<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for g in RegGroup::ALL {
            for (slot, v) in self.regs[g.index()].iter().enumerate() {
                let (row, col, pos) = self.geometry.coords(g, slot);
                writeln!(out, "{} {} {} {} {} {}", self.cycle, g, row, col, pos, v)?;
            }
        }
        Ok(())
    }
}

/// A bit-flip applied right after the clock edge that starts `cycle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Injection {
    pub cycle: u32,
    pub ff: FlipFlopId,
}

/// Outputs and intermediate probes of one simulated stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamRun {
    pub outputs: Vec<OutputVector>,
    /// Accumulator contents seen by the round block, per iteration.
    pub accumulated: Vec<Vec<i32>>,
    /// Round register contents seen by the NLF table, per iteration.
    pub rounded: Vec<Vec<i8>>,
    pub cycles: u32,
}

/// Reusable simulator: one per worker, never shared between runs.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    state: PipelineState,
    scratch: PipelineState,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let state = PipelineState::new(config.geometry);
        let scratch = state.clone();
        Self {
            config,
            state,
            scratch,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn schedule(&self, iterations: usize) -> Schedule {
        Schedule::new(self.config.geometry, self.config.passes, iterations)
    }

    fn check_batches(&self, tile: &Tile, batches: &[Vec<ActivationVector>]) -> Result<()> {
        if batches.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one iteration is required".into(),
            ));
        }
        if tile.shift() != self.config.shift {
            return Err(Error::InvalidArgument(format!(
                "tile shift {} differs from configured shift {}",
                tile.shift().get(),
                self.config.shift.get()
            )));
        }
        for batch in batches {
            if batch.len() != self.config.passes {
                return Err(Error::DimensionMismatch {
                    what: "activation vectors per iteration",
                    expected: self.config.passes,
                    actual: batch.len(),
                });
            }
            for a in batch {
                if a.0.len() != self.config.rows() {
                    return Err(Error::DimensionMismatch {
                        what: "activation vector length",
                        expected: self.config.rows(),
                        actual: a.0.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Simulates `batches.len()` back-to-back iterations over one stationary
    /// tile, optionally flipping one bit, calling `observer` with the state
    /// held during every cycle.
    pub fn run_stream(
        &mut self,
        tile: &Tile,
        batches: &[Vec<ActivationVector>],
        injection: Option<Injection>,
        mut observer: Option<&mut dyn FnMut(&PipelineState)>,
    ) -> Result<StreamRun> {
        self.check_batches(tile, batches)?;
        let schedule = self.schedule(batches.len());
        let total = schedule.total_cycles();
        if let Some(inj) = injection {
            if inj.cycle >= total {
                return Err(Error::CycleOutOfWindow {
                    cycle: inj.cycle,
                    window: total,
                });
            }
            self.config.geometry.locate(&inj.ff)?;
        }
        let vectors: Vec<&[i8]> = batches.iter().flatten().map(|a| a.0.as_slice()).collect();
        let cols = self.config.cols();
        let mut run = StreamRun {
            outputs: vec![OutputVector(Vec::new()); batches.len()],
            accumulated: vec![Vec::new(); batches.len()],
            rounded: vec![Vec::new(); batches.len()],
            cycles: total,
        };

        self.state.reset_and_preload(tile)?;
        for cycle in 0..total {
            if cycle > 0 {
                let prev = cycle - 1;
                let acts = schedule.input_vector(prev).map(|v| vectors[v]);
                self.state.step(
                    &mut self.scratch,
                    acts,
                    tile.biases(),
                    schedule.control(prev),
                    self.config.shift,
                    &self.config.nlf,
                );
            }
            if let Some(inj) = injection.filter(|i| i.cycle == cycle) {
                self.state.flip_bit(&inj.ff)?;
            }
            if let Some(obs) = observer.as_mut() {
                obs(&self.state);
            }
            if let Some(j) = schedule.completed(cycle) {
                run.accumulated[j as usize] = self.state.group(RegGroup::AccumReg).to_vec();
            }
            if cycle > 0 && schedule.completed(cycle - 1).is_some() {
                let j = schedule.completed(cycle - 1).unwrap() as usize;
                run.rounded[j] = self
                    .state
                    .group(RegGroup::RoundReg)
                    .iter()
                    .map(|&v| v as i8)
                    .collect();
            }
            if let Some(j) = schedule.readout(cycle) {
                let out = self.state.group(RegGroup::NlfReg)[..cols]
                    .iter()
                    .map(|&v| v as i8);
                run.outputs[j as usize] = OutputVector(out.collect());
            }
        }
        Ok(run)
    }

    /// One isolated iteration from reset. Returns the output and the cycle
    /// count `T`.
    pub fn run_iteration(
        &mut self,
        tile: &Tile,
        acts: &[ActivationVector],
    ) -> Result<(OutputVector, u32)> {
        let run = self.run_stream(tile, &[acts.to_vec()], None, None)?;
        let cycles = run.cycles;
        Ok((run.outputs.into_iter().next().unwrap(), cycles))
    }
}

/// Convenience wrapper around [`Pipeline::run_iteration`].
pub fn run_iteration(
    config: &PipelineConfig,
    tile: &Tile,
    acts: &[ActivationVector],
) -> Result<(OutputVector, u32)> {
    Pipeline::new(config.clone()).run_iteration(tile, acts)
}
