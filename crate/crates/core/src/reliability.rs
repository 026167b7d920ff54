//! Upset-rate arithmetic: expected upsets per clock cycle and the Poisson
//! probability of `k` upsets in that window.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// GEO orbit, 100 mil aluminium shield, 28 nm bulk flip-flop.
pub const GEO_SER_PER_FF_DAY: f64 = 2.82e-7;
pub const DEFAULT_CLOCK_HZ: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerContext {
    /// Upsets per flip-flop per day.
    pub ser_per_ff_day: f64,
    pub f_clock: f64,
    pub n_ff: u64,
}

impl SerContext {
    pub fn new(ser_per_ff_day: f64, f_clock: f64, n_ff: u64) -> Result<Self> {
        let ctx = Self {
            ser_per_ff_day,
            f_clock,
            n_ff,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    fn validate(&self) -> Result<()> {
        if !(self.ser_per_ff_day.is_finite() && self.ser_per_ff_day > 0.0) {
            return Err(Error::NonPositive("soft-error rate"));
        }
        if !(self.f_clock.is_finite() && self.f_clock > 0.0) {
            return Err(Error::NonPositive("clock frequency"));
        }
        if self.n_ff == 0 {
            return Err(Error::NonPositive("flip-flop count"));
        }
        Ok(())
    }
}

/// Expected upsets during one clock cycle.
pub fn lambda_per_cycle(ctx: &SerContext) -> Result<f64> {
    ctx.validate()?;
    Ok(ctx.n_ff as f64 * (ctx.ser_per_ff_day / SECONDS_PER_DAY) / ctx.f_clock)
}

fn ln_factorial(k: u64) -> f64 {
    if k <= 20 {
        // 20! < 2^63, exact in integers
        ((1..=k).product::<u64>() as f64).ln()
    } else {
        (2..=k).map(|i| (i as f64).ln()).sum()
    }
}

/// `lambda^k e^-lambda / k!`, evaluated in log space.
pub fn poisson_pk(lambda: f64, k: i64) -> Result<f64> {
    if k < 0 {
        return Err(Error::InvalidArgument(format!("k must be >= 0, got {k}")));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    let k = k as u64;
    Ok((k as f64 * lambda.ln() - lambda - ln_factorial(k)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeuColumn {
    pub context: SerContext,
    pub lambda: f64,
    /// `P(k)` for `k = 0..=k_max`.
    pub probabilities: Vec<f64>,
    /// `1 - P(0)` computed without cancellation.
    pub p0_complement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeuTable {
    pub k_max: u32,
    pub columns: Vec<SeuColumn>,
}

pub fn seu_table(contexts: &[SerContext], k_max: u32) -> Result<SeuTable> {
    let columns = contexts
        .iter()
        .map(|ctx| {
            let lambda = lambda_per_cycle(ctx)?;
            let probabilities = (0..=k_max as i64)
                .map(|k| poisson_pk(lambda, k))
                .collect::<Result<Vec<_>>>()?;
            Ok(SeuColumn {
                context: *ctx,
                lambda,
                probabilities,
                p0_complement: -(-lambda).exp_m1(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeuTable { k_max, columns })
}

impl fmt::Display for SeuTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const W: usize = 18;
        write!(f, "{:>6}", "k")?;
        for _ in &self.columns {
            write!(f, " | {:>W$}", "P(k SEUs)")?;
        }
        writeln!(f)?;
        write!(f, "{:>6}", "n_ffs")?;
        for col in &self.columns {
            write!(f, " | {:>W$}", col.context.n_ff)?;
        }
        writeln!(f)?;
        for k in 0..=self.k_max as usize {
            write!(f, "{k:>6}")?;
            for col in &self.columns {
                let cell = if k == 0 {
                    format!("1 - {:.3e}", col.p0_complement)
                } else {
                    format!("{:.3e}", col.probabilities[k])
                };
                write!(f, " | {cell:>W$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
