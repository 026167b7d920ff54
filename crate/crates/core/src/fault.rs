//! Single-upset injection: sample a (flip-flop bit, cycle) pair, run the
//! faulty pipeline next to its fault-free reference and classify the result.
//!
//! Two utilisation models are supported. [`Utilisation::Isolated`] runs one
//! iteration from reset, so most registers hold live data for only a
//! cycle or two of the window. [`Utilisation::Streaming`] embeds the target
//! iteration in a train of independent iterations sharing the same
//! stationary tile, long enough that every register holds live data during
//! every cycle of the target window; every output of the train is compared.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::golden::{golden_forward_with, golden_probe, ColumnProbe, OutputVector};
use crate::pipeline::{Injection, Pipeline, PipelineConfig, StreamRun};
use crate::quant::{round_shift, Int8Range};
use crate::registry::{FlipFlopId, Registry};
use crate::stimulus::Stimulus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Utilisation {
    Isolated,
    #[default]
    Streaming,
}

impl std::str::FromStr for Utilisation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isolated" => Ok(Self::Isolated),
            "streaming" => Ok(Self::Streaming),
            other => Err(Error::InvalidArgument(format!(
                "unknown utilisation '{other}'"
            ))),
        }
    }
}

impl Utilisation {
    /// `(iterations in the train, index of the target iteration)`.
    pub fn train(self, config: &PipelineConfig) -> (usize, usize) {
        match self {
            Utilisation::Isolated => (1, 0),
            Utilisation::Streaming => {
                let lead = config.window().div_ceil(config.passes as u32) as usize;
                (2 * lead + 1, lead)
            }
        }
    }
}

/// One upset: a bit and the cycle of the target iteration's window it is
/// applied in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub ff: FlipFlopId,
    pub cycle: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultOutcome {
    pub spec: FaultSpec,
    pub propagated: bool,
    /// Largest `|faulty - golden|` over every output element.
    pub magnitude: u32,
    /// Per column, the signed difference with the largest magnitude over
    /// all iterations of the run.
    pub deltas: Vec<i32>,
}

/// Uniform over all bits (by canonical index) and, independently, over the
/// `window` cycles.
pub fn sample_fault<R: Rng + ?Sized>(registry: &Registry, window: u32, rng: &mut R) -> FaultSpec {
    assert!(!registry.is_empty() && window > 0, "empty fault space");
    let index = rng.random_range(0..registry.len());
    let cycle = rng.random_range(0..window);
    FaultSpec {
        ff: registry.get(index).unwrap(),
        cycle,
    }
}

/// Why a fault did not reach the output, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskingTag {
    /// Never reached the accumulator result or the round register.
    Overwritten,
    /// Changed the accumulator only below the rounding LSB.
    RoundMasked,
    /// Changed the rounded value only beyond the saturation bound.
    ClipMasked,
    /// Reached the NLF input but the table mapped both values alike.
    ReluMasked,
}

/// Faulty run plus the references needed to judge it.
#[derive(Debug, Clone)]
pub struct FaultRun {
    pub outcome: FaultOutcome,
    pub faulty: StreamRun,
    pub golden: Vec<OutputVector>,
}

/// Stateless between runs; one per worker.
#[derive(Debug, Clone)]
pub struct FaultExecutor {
    pipeline: Pipeline,
    utilisation: Utilisation,
}

impl FaultExecutor {
    pub fn new(config: PipelineConfig, utilisation: Utilisation) -> Self {
        Self {
            pipeline: Pipeline::new(config),
            utilisation,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        self.pipeline.config()
    }

    pub fn utilisation(&self) -> Utilisation {
        self.utilisation
    }

    /// Cycles of the target iteration's window.
    pub fn window(&self) -> u32 {
        self.config().window()
    }

    /// `(iterations, target)` of the stimulus this executor expects.
    pub fn train(&self) -> (usize, usize) {
        self.utilisation.train(self.config())
    }

    fn check(&self, stimulus: &Stimulus, spec: &FaultSpec) -> Result<()> {
        let (iterations, target) = self.train();
        if stimulus.batches.len() != iterations || stimulus.target != target {
            return Err(Error::InvalidArgument(format!(
                "{:?} utilisation needs {iterations} iterations targeting #{target}, stimulus has {} targeting #{}",
                self.utilisation,
                stimulus.batches.len(),
                stimulus.target
            )));
        }
        if spec.cycle >= self.window() {
            return Err(Error::CycleOutOfWindow {
                cycle: spec.cycle,
                window: self.window(),
            });
        }
        self.config().geometry.locate(&spec.ff)?;
        Ok(())
    }

    fn golden(&self, stimulus: &Stimulus) -> Result<Vec<OutputVector>> {
        stimulus
            .batches
            .iter()
            .map(|b| golden_forward_with(&stimulus.tile, b, &self.config().nlf))
            .collect()
    }

    pub fn run_detailed(&mut self, stimulus: &Stimulus, spec: FaultSpec) -> Result<FaultRun> {
        self.check(stimulus, &spec)?;
        let golden = self.golden(stimulus)?;
        let start = self
            .pipeline
            .schedule(stimulus.batches.len())
            .iteration_start(stimulus.target as u32);
        let injection = Injection {
            cycle: start + spec.cycle,
            ff: spec.ff,
        };
        let faulty =
            self.pipeline
                .run_stream(&stimulus.tile, &stimulus.batches, Some(injection), None)?;
        let outcome = compare(spec, &golden, &faulty.outputs, self.config().cols());
        Ok(FaultRun {
            outcome,
            faulty,
            golden,
        })
    }

    pub fn run_with_fault(&mut self, stimulus: &Stimulus, spec: FaultSpec) -> Result<FaultOutcome> {
        Ok(self.run_detailed(stimulus, spec)?.outcome)
    }
}

fn compare(
    spec: FaultSpec,
    golden: &[OutputVector],
    faulty: &[OutputVector],
    cols: usize,
) -> FaultOutcome {
    let mut deltas = vec![0i32; cols];
    for (g, f) in golden.iter().zip(faulty) {
        for (c, (&gv, &fv)) in g.0.iter().zip(&f.0).enumerate() {
            let d = fv as i32 - gv as i32;
            if d.abs() > deltas[c].abs() {
                deltas[c] = d;
            }
        }
    }
    let magnitude = deltas.iter().map(|d| d.unsigned_abs()).max().unwrap_or(0);
    FaultOutcome {
        spec,
        propagated: magnitude > 0,
        magnitude,
        deltas,
    }
}

/// Replays a non-propagated fault through the post-processing stages and
/// reports the furthest stage its effect reached. `None` when the fault
/// propagated.
pub fn classify_masking(
    run: &FaultRun,
    stimulus: &Stimulus,
    config: &PipelineConfig,
) -> Result<Option<MaskingTag>> {
    if run.outcome.propagated {
        return Ok(None);
    }
    let mut tag = MaskingTag::Overwritten;
    for (j, batch) in stimulus.batches.iter().enumerate() {
        let probes: Vec<ColumnProbe> = golden_probe(&stimulus.tile, batch, &config.nlf)?;
        for (c, probe) in probes.iter().enumerate() {
            let acc = run.faulty.accumulated[j][c];
            let rounded = run.faulty.rounded[j][c];
            let element = if acc == probe.accumulated {
                if rounded == probe.clipped {
                    MaskingTag::Overwritten
                } else {
                    MaskingTag::ReluMasked
                }
            } else if rounded != probe.clipped {
                MaskingTag::ReluMasked
            } else if round_shift(acc, stimulus.tile.shift()) == probe.rounded {
                MaskingTag::RoundMasked
            } else {
                debug_assert_eq!(
                    Int8Range::clip(round_shift(acc, stimulus.tile.shift())),
                    probe.clipped
                );
                MaskingTag::ClipMasked
            };
            tag = tag.max(element);
        }
    }
    Ok(Some(tag))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::golden::{ActivationVector, Tile};
    use crate::quant::ShiftAmount;
    use crate::registry::{build_registry, RegGroup};

    fn sh(v: u8) -> ShiftAmount {
        ShiftAmount::new(v).unwrap()
    }

    fn ff(group: RegGroup, row: usize, col: usize, chain_pos: usize, bit: u8) -> FlipFlopId {
        FlipFlopId {
            group,
            row,
            col,
            chain_pos,
            bit,
        }
    }

    fn stim(tile: Tile, acts: Vec<i8>) -> Stimulus {
        Stimulus {
            tile,
            batches: vec![vec![ActivationVector(acts)]],
            target: 0,
            iteration: 0,
        }
    }

    fn isolated(r: usize, c: usize, s: u8) -> FaultExecutor {
        FaultExecutor::new(
            PipelineConfig::new(r, c, 1, sh(s)).unwrap(),
            Utilisation::Isolated,
        )
    }

    #[test]
    fn singleton_sampling() {
        // a 1x1 registry has 96 bits; restrict to one by construction
        let reg = build_registry(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = sample_fault(&reg, 1, &mut rng);
            assert_eq!(s.cycle, 0);
            assert!(reg.index_of(&s.ff).is_some());
        }
        let a = sample_fault(&reg, 9, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_fault(&reg, 9, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn dead_register_fault_is_overwritten() {
        let mut ex = isolated(2, 2, 3);
        let s = stim(
            Tile::new(2, 2, vec![1, 2, 3, 4], vec![10, -10], sh(3)).unwrap(),
            vec![5, 6],
        );
        // the round register is latched at cycle 6; anything earlier is dead
        let spec = FaultSpec {
            ff: ff(RegGroup::RoundReg, 0, 0, 0, 6),
            cycle: 2,
        };
        let run = ex.run_detailed(&s, spec).unwrap();
        assert!(!run.outcome.propagated);
        assert_eq!(run.outcome.magnitude, 0);
        assert_eq!(
            classify_masking(&run, &s, ex.config()).unwrap(),
            Some(MaskingTag::Overwritten)
        );
    }

    #[test]
    fn nlf_fault_in_hold_window() {
        let mut ex = isolated(2, 2, 3);
        let s = stim(
            Tile::new(2, 2, vec![1, 2, 3, 4], vec![10, -10], sh(3)).unwrap(),
            vec![5, 6],
        );
        let last = ex.window() - 1;
        for bit in 0..8 {
            let o = ex
                .run_with_fault(
                    &s,
                    FaultSpec {
                        ff: ff(RegGroup::NlfReg, 0, 0, 0, bit),
                        cycle: last,
                    },
                )
                .unwrap();
            assert!(o.propagated);
            assert_eq!(o.deltas.iter().filter(|&&d| d != 0).count(), 1);
            assert_eq!(o.magnitude, 1 << bit);
        }
    }

    #[test]
    fn sub_lsb_accumulator_fault_is_round_masked() {
        // acc = [33, 24], S = 3 -> (33+4)>>3 = 4; flipping bit 1 gives 35 -> 4
        let mut ex = isolated(2, 2, 3);
        let s = stim(
            Tile::new(2, 2, vec![1, 2, 3, 4], vec![10, -10], sh(3)).unwrap(),
            vec![5, 6],
        );
        let done = 2 + 2 + 1; // accumulation complete
        let run = ex
            .run_detailed(
                &s,
                FaultSpec {
                    ff: ff(RegGroup::AccumReg, 0, 0, 0, 1),
                    cycle: done,
                },
            )
            .unwrap();
        assert!(!run.outcome.propagated);
        assert_eq!(
            classify_masking(&run, &s, ex.config()).unwrap(),
            Some(MaskingTag::RoundMasked)
        );
    }

    #[test]
    fn relu_and_clip_masking() {
        let mut ex = isolated(1, 1, 0);
        // acc = -50 -> round -50 -> relu 0; flipping bit 3 of the round
        // register keeps it negative
        let s = stim(
            Tile::new(1, 1, vec![1], vec![-60], sh(0)).unwrap(),
            vec![10],
        );
        let run = ex
            .run_detailed(
                &s,
                FaultSpec {
                    ff: ff(RegGroup::RoundReg, 0, 0, 0, 3),
                    cycle: ex.window() - 2,
                },
            )
            .unwrap();
        assert!(!run.outcome.propagated);
        assert_eq!(
            classify_masking(&run, &s, ex.config()).unwrap(),
            Some(MaskingTag::ReluMasked)
        );

        // acc = 1000 saturates to 127; flipping bit 2 keeps it saturated
        let s = stim(
            Tile::new(1, 1, vec![1], vec![990], sh(0)).unwrap(),
            vec![10],
        );
        let run = ex
            .run_detailed(
                &s,
                FaultSpec {
                    ff: ff(RegGroup::AccumReg, 0, 0, 0, 2),
                    cycle: 3,
                },
            )
            .unwrap();
        assert!(!run.outcome.propagated);
        assert_eq!(
            classify_masking(&run, &s, ex.config()).unwrap(),
            Some(MaskingTag::ClipMasked)
        );
    }

    #[test]
    fn propagated_faults_have_no_masking_tag() {
        let mut ex = isolated(2, 2, 3);
        let s = stim(
            Tile::new(2, 2, vec![1, 2, 3, 4], vec![10, -10], sh(3)).unwrap(),
            vec![5, 6],
        );
        let run = ex
            .run_detailed(
                &s,
                FaultSpec {
                    ff: ff(RegGroup::WReg, 1, 0, 0, 6),
                    cycle: 0,
                },
            )
            .unwrap();
        assert!(run.outcome.propagated);
        assert_eq!(classify_masking(&run, &s, ex.config()).unwrap(), None);
    }

    #[test]
    fn streaming_train_covers_window() {
        let cfg = PipelineConfig::new(4, 4, 1, sh(6)).unwrap();
        let (n, target) = Utilisation::Streaming.train(&cfg);
        assert_eq!(target, 12);
        assert_eq!(n, 25);
        let cfg = PipelineConfig::new(4, 4, 2, sh(6)).unwrap();
        assert_eq!(Utilisation::Streaming.train(&cfg), (15, 7));
    }

    #[test]
    fn rejects_mismatched_stimulus() {
        let mut ex = FaultExecutor::new(
            PipelineConfig::new(2, 2, 1, sh(3)).unwrap(),
            Utilisation::Streaming,
        );
        let s = stim(Tile::zeros(2, 2, sh(3)).unwrap(), vec![1, 1]);
        let spec = FaultSpec {
            ff: ff(RegGroup::WReg, 0, 0, 0, 0),
            cycle: 0,
        };
        assert!(ex.run_with_fault(&s, spec).is_err());
        let mut ex = isolated(2, 2, 3);
        let late = FaultSpec { cycle: 8, ..spec };
        assert!(matches!(
            ex.run_with_fault(&s, late),
            Err(Error::CycleOutOfWindow { .. })
        ));
    }
}
