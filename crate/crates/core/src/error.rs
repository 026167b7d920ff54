use std::path::PathBuf;

use thiserror::Error;

use crate::registry::RegGroup;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("array dimensions must be at least 1x1, got {rows}x{cols}")]
    ZeroDimension { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("accumulation passes must be >= 1")]
    ZeroPasses,

    #[error("shift amount {0} does not fit the 5-bit shift input")]
    ShiftOutOfRange(i64),

    #[error("calibration data is degenerate: {0}")]
    DegenerateCalibration(&'static str),

    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "flip-flop {group}[row={row}, col={col}, chain_pos={chain_pos}, bit={bit}] does not exist"
    )]
    InvalidFlipFlop {
        group: RegGroup,
        row: usize,
        col: usize,
        chain_pos: usize,
        bit: u8,
    },

    #[error("fault cycle {cycle} outside the iteration window [0, {window})")]
    CycleOutOfWindow { cycle: u32, window: u32 },

    #[error("cannot aggregate an empty record set")]
    EmptyRecords,

    #[error("corrupt record file {path}: {reason} (last valid watermark: {watermark:?})")]
    CorruptRecords {
        path: PathBuf,
        reason: String,
        watermark: Vec<(String, u64)>,
    },

    #[error("campaign stopped after {completed} iterations of size {size}: {source}")]
    Interrupted {
        size: String,
        completed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("resume refused: {0}")]
    ResumeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from invalid input rather than from a
    /// failure while running.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::ZeroDimension { .. }
                | Error::DimensionMismatch { .. }
                | Error::ZeroPasses
                | Error::ShiftOutOfRange(_)
                | Error::NonPositive(_)
                | Error::InvalidArgument(_)
                | Error::InvalidFlipFlop { .. }
                | Error::CycleOutOfWindow { .. }
                | Error::ResumeMismatch(_)
        )
    }
}
