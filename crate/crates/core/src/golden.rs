//! Functional reference model of the accelerator pipeline.
//!
//! No clocks, no registers: just the arithmetic the hardware is supposed to
//! perform. The cycle-accurate model in [`crate::pipeline`] is checked
//! against this module bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{round_shift, round_shift_clip, Int8Range, ShiftAmount};

/// A weight-stationary tile: `rows x cols` int8 weights (row-major), one
/// int32 bias per column and the requantization shift.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    rows: usize,
    cols: usize,
    weights: Vec<i8>,
    biases: Vec<i32>,
    shift: ShiftAmount,
}

impl Tile {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<i8>,
        biases: Vec<i32>,
        shift: ShiftAmount,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ZeroDimension { rows, cols });
        }
        if weights.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "weight count",
                expected: rows * cols,
                actual: weights.len(),
            });
        }
        if biases.len() != cols {
            return Err(Error::DimensionMismatch {
                what: "bias count",
                expected: cols,
                actual: biases.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            weights,
            biases,
            shift,
        })
    }

    pub fn zeros(rows: usize, cols: usize, shift: ShiftAmount) -> Result<Self> {
        Self::new(rows, cols, vec![0; rows * cols], vec![0; cols], shift)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> i8 {
        self.weights[row * self.cols + col]
    }

    pub fn weights(&self) -> &[i8] {
        &self.weights
    }

    pub fn biases(&self) -> &[i32] {
        &self.biases
    }

    pub fn shift(&self) -> ShiftAmount {
        self.shift
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivationVector(pub Vec<i8>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutputVector(pub Vec<i8>);

impl OutputVector {
    pub fn values(&self) -> &[i8] {
        &self.0
    }
}

/// 256-entry int8 -> int8 lookup table realizing the non-linear function.
#[derive(Clone, PartialEq, Eq)]
pub struct NlfTable([i8; 256]);

impl NlfTable {
    pub fn from_fn(f: impl Fn(i8) -> i8) -> Self {
        let mut table = [0i8; 256];
        for (i, slot) in table.iter_mut().enumerate() {
            *slot = f(i as u8 as i8);
        }
        Self(table)
    }

    pub const fn relu() -> Self {
        let mut table = [0i8; 256];
        let mut i = 0;
        while i < 256 {
            let x = i as u8 as i8;
            table[i] = if x > 0 { x } else { 0 };
            i += 1;
        }
        Self(table)
    }

    pub fn identity() -> Self {
        Self::from_fn(|x| x)
    }

    #[inline]
    pub fn lookup(&self, x: i8) -> i8 {
        self.0[x as u8 as usize]
    }
}

impl Default for NlfTable {
    fn default() -> Self {
        Self::relu()
    }
}

impl std::fmt::Debug for NlfTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == Self::relu() {
            f.write_str("NlfTable(relu)")
        } else if *self == Self::identity() {
            f.write_str("NlfTable(identity)")
        } else {
            f.write_str("NlfTable(custom)")
        }
    }
}

static RELU: NlfTable = NlfTable::relu();

pub fn relu_lut(x: i8) -> i8 {
    RELU.lookup(x)
}

fn check_acts(tile: &Tile, acts: &[ActivationVector]) -> Result<()> {
    if acts.is_empty() {
        return Err(Error::ZeroPasses);
    }
    for a in acts {
        if a.0.len() != tile.rows {
            return Err(Error::DimensionMismatch {
                what: "activation vector length",
                expected: tile.rows,
                actual: a.0.len(),
            });
        }
    }
    Ok(())
}

/// `b_c + sum over passes and rows of a_r * w_rc` in wrapping int32.
pub fn gemm_accumulate(tile: &Tile, acts: &[ActivationVector]) -> Result<Vec<i32>> {
    check_acts(tile, acts)?;
    let mut acc = tile.biases.clone();
    for a in acts {
        for (r, &x) in a.0.iter().enumerate() {
            for (c, slot) in acc.iter_mut().enumerate() {
                *slot = slot.wrapping_add(x as i32 * tile.weight(r, c) as i32);
            }
        }
    }
    Ok(acc)
}

/// Every intermediate value of one output column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnProbe {
    pub accumulated: i32,
    /// `round(acc / 2^S)` before saturation.
    pub rounded: i64,
    pub clipped: i8,
    pub output: i8,
}

pub fn golden_probe(
    tile: &Tile,
    acts: &[ActivationVector],
    nlf: &NlfTable,
) -> Result<Vec<ColumnProbe>> {
    let acc = gemm_accumulate(tile, acts)?;
    Ok(acc
        .into_iter()
        .map(|a| {
            let rounded = round_shift(a, tile.shift);
            let clipped = Int8Range::clip(rounded);
            ColumnProbe {
                accumulated: a,
                rounded,
                clipped,
                output: nlf.lookup(clipped),
            }
        })
        .collect())
}

/// Fault-free pipeline output with an arbitrary NLF table.
pub fn golden_forward_with(
    tile: &Tile,
    acts: &[ActivationVector],
    nlf: &NlfTable,
) -> Result<OutputVector> {
    let acc = gemm_accumulate(tile, acts)?;
    Ok(OutputVector(
        acc.into_iter()
            .map(|a| nlf.lookup(round_shift_clip(a, tile.shift)))
            .collect(),
    ))
}

/// Fault-free pipeline output with the ReLU table.
pub fn golden_forward(tile: &Tile, acts: &[ActivationVector]) -> Result<OutputVector> {
    golden_forward_with(tile, acts, &NlfTable::relu())
}
