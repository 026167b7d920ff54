//! Constrained-random workloads that look like a quantized dense layer.
//!
//! Weights and activations are drawn from N(0, 1) and quantized with
//! 3-sigma power-of-two scales; biases follow the usual linear-layer
//! initialization `U(-1/sqrt(j), 1/sqrt(j))` expressed in accumulator units
//! `s_a * s_w`. The requantization shift follows from the three scales and
//! stays fixed for a whole campaign.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::golden::{ActivationVector, Tile};
use crate::quant::{
    calibrate_3sigma, quantize_to_int8, scale_to_shift, Int8Range, Pow2Scale, ShiftAmount,
};
use crate::registry::Geometry;
use crate::rng::{substream, Purpose};

pub const MIN_CALIBRATION_SAMPLES: usize = 1000;
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 10_000;

/// Scales derived from the workload distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    pub s_a: Pow2Scale,
    pub s_w: Pow2Scale,
    pub s_y: Pow2Scale,
    pub shift: ShiftAmount,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusParams {
    pub rows: usize,
    pub cols: usize,
    pub passes: usize,
    pub s_a: Pow2Scale,
    pub s_w: Pow2Scale,
    pub s_y: Pow2Scale,
    pub seed: u64,
    pub calibration_samples: usize,
}

impl StimulusParams {
    pub fn from_calibration(
        rows: usize,
        cols: usize,
        passes: usize,
        cal: &Calibration,
    ) -> Result<Self> {
        Geometry::new(rows, cols)?;
        if passes == 0 {
            return Err(Error::ZeroPasses);
        }
        let params = Self {
            rows,
            cols,
            passes,
            s_a: cal.s_a,
            s_w: cal.s_w,
            s_y: cal.s_y,
            seed: cal.seed,
            calibration_samples: cal.samples,
        };
        params.shift()?;
        Ok(params)
    }

    pub fn shift(&self) -> Result<ShiftAmount> {
        scale_to_shift(self.s_a, self.s_w, self.s_y)
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Contraction length of one iteration, the `j` of the bias range.
    fn fan_in(&self) -> usize {
        self.rows * self.passes
    }
}

/// One fault-injection iteration's inputs: a stationary tile and one or
/// more back-to-back iterations of activations. `target` is the iteration
/// whose window the fault is drawn in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stimulus {
    pub tile: Tile,
    pub batches: Vec<Vec<ActivationVector>>,
    pub target: usize,
    pub iteration: u64,
}

impl Stimulus {
    /// Activation vectors of the target iteration.
    pub fn acts(&self) -> &[ActivationVector] {
        &self.batches[self.target]
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn bias_draw<R: Rng>(rng: &mut R, fan_in: usize) -> f64 {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Uniform::new_inclusive(-bound, bound)
        .expect("finite bias bound")
        .sample(rng)
}

/// `s_a`, `s_w` from `samples` N(0,1) draws each, `s_y` from `samples`
/// outputs of the real-valued layer (biases included), then the shift.
pub fn calibrate_workload(
    rows: usize,
    cols: usize,
    passes: usize,
    samples: usize,
    seed: u64,
) -> Result<Calibration> {
    let geometry = Geometry::new(rows, cols)?;
    if passes == 0 {
        return Err(Error::ZeroPasses);
    }
    if samples < MIN_CALIBRATION_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {samples}"
        )));
    }
    let mut rng = substream(seed, Purpose::Calibration, geometry, 0);
    let acts: Vec<f64> = (0..samples).map(|_| normal(&mut rng)).collect();
    let weights: Vec<f64> = (0..samples).map(|_| normal(&mut rng)).collect();
    let s_a = calibrate_3sigma(&acts)?;
    let s_w = calibrate_3sigma(&weights)?;

    let fan_in = rows * passes;
    let mut outputs = Vec::with_capacity(samples);
    while outputs.len() < samples {
        let a: Vec<f64> = (0..fan_in).map(|_| normal(&mut rng)).collect();
        for _ in 0..cols {
            let mut y = bias_draw(&mut rng, fan_in);
            for &x in &a {
                y += x * normal(&mut rng);
            }
            outputs.push(y);
        }
    }
    outputs.truncate(samples);
    let s_y = calibrate_3sigma(&outputs)?;
    let shift = scale_to_shift(s_a, s_w, s_y)?;
    Ok(Calibration {
        s_a,
        s_w,
        s_y,
        shift,
        samples,
        seed,
    })
}

/// Bias in accumulator units: `round(u / (s_a * s_w))`, saturated to int32.
fn quantize_bias(u: f64, params: &StimulusParams) -> i32 {
    let exponent = params.s_a.exponent() + params.s_w.exponent();
    let q = (u * 2f64.powi(-exponent)).round();
    q.clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

/// Single-iteration stimulus for `index`.
pub fn generate_stimulus(params: &StimulusParams, index: u64) -> Result<Stimulus> {
    generate_train(params, index, 1, 0)
}

/// A tile plus `iterations` independent activation batches, all drawn from
/// the substream of `index`.
pub fn generate_train(
    params: &StimulusParams,
    index: u64,
    iterations: usize,
    target: usize,
) -> Result<Stimulus> {
    if target >= iterations {
        return Err(Error::InvalidArgument(format!(
            "target iteration {target} outside train of {iterations}"
        )));
    }
    let shift = params.shift()?;
    let mut rng = substream(params.seed, Purpose::Stimulus, params.geometry(), index);
    let (rows, cols) = (params.rows, params.cols);
    let weights: Vec<i8> = (0..rows * cols)
        .map(|_| quantize_to_int8(normal(&mut rng), params.s_w))
        .collect();
    let biases: Vec<i32> = (0..cols)
        .map(|_| quantize_bias(bias_draw(&mut rng, params.fan_in()), params))
        .collect();
    let tile = Tile::new(rows, cols, weights, biases, shift)?;
    let batches = (0..iterations)
        .map(|_| {
            (0..params.passes)
                .map(|_| {
                    ActivationVector(
                        (0..rows)
                            .map(|_| quantize_to_int8(normal(&mut rng), params.s_a))
                            .collect(),
                    )
                })
                .collect()
        })
        .collect();
    Ok(Stimulus {
        tile,
        batches,
        target,
        iteration: index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub samples: usize,
    pub weight_mean: f64,
    pub weight_std: f64,
    pub activation_mean: f64,
    pub activation_std: f64,
    /// Fraction of weight and activation draws that saturated.
    pub clip_rate: f64,
}

fn saturates(x: f64, s: Pow2Scale) -> bool {
    let q = (x * 2f64.powi(-s.exponent())).round();
    q > Int8Range::HI as f64 || q < Int8Range::LO as f64
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Statistics of `n` quantized weights and `n` quantized activations drawn
/// exactly as [`generate_stimulus`] draws them, rescaled to real units.
pub fn empirical_distribution_check(
    params: &StimulusParams,
    n: usize,
) -> Result<DistributionSummary> {
    if n < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "distribution check needs at least 10000 samples, got {n}"
        )));
    }
    let mut weights = Vec::with_capacity(n);
    let mut acts = Vec::with_capacity(n);
    let mut clipped = 0usize;
    let mut rng = substream(params.seed, Purpose::Calibration, params.geometry(), 1);
    for _ in 0..n {
        let (w, a) = (normal(&mut rng), normal(&mut rng));
        clipped += saturates(w, params.s_w) as usize + saturates(a, params.s_a) as usize;
        weights.push(quantize_to_int8(w, params.s_w) as f64 * params.s_w.value());
        acts.push(quantize_to_int8(a, params.s_a) as f64 * params.s_a.value());
    }
    let (weight_mean, weight_std) = mean_std(&weights);
    let (activation_mean, activation_std) = mean_std(&acts);
    Ok(DistributionSummary {
        samples: n,
        weight_mean,
        weight_std,
        activation_mean,
        activation_std,
        clip_rate: clipped as f64 / (2 * n) as f64,
    })
}
