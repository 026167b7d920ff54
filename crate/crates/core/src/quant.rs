//! Power-of-two symmetric quantization.
//!
//! Scales are carried as exponents only (`s = 2^n`), so every conversion
//! between the real and integer domains is an exact binary scaling. The
//! rounding rule everywhere is round-half-away-from-zero and the integer
//! codomain is the full two's-complement int8 range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer codomain of `clip`.
pub struct Int8Range;

impl Int8Range {
    pub const LO: i64 = i8::MIN as i64;
    pub const HI: i64 = i8::MAX as i64;

    #[inline]
    pub fn clip(x: i64) -> i8 {
        x.clamp(Self::LO, Self::HI) as i8
    }
}

/// A power-of-two scale factor `2^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pow2Scale(i32);

impl Pow2Scale {
    pub const fn from_exponent(exponent: i32) -> Self {
        Self(exponent)
    }

    pub const fn exponent(self) -> i32 {
        self.0
    }

    /// The real value `2^n`. Exact for every exponent f64 can represent.
    pub fn value(self) -> f64 {
        2f64.powi(self.0)
    }

    /// `x / s`, exact apart from the f64 exponent range.
    fn divide(self, x: f64) -> f64 {
        x * 2f64.powi(-self.0)
    }
}

/// Right-shift amount of the rounding block; five bits wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ShiftAmount(u8);

impl ShiftAmount {
    pub const MAX: u8 = 31;

    pub fn new(value: u8) -> Result<Self> {
        if value > Self::MAX {
            return Err(Error::ShiftOutOfRange(value as i64));
        }
        Ok(Self(value))
    }

    pub const fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for ShiftAmount {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ShiftAmount> for u8 {
    fn from(s: ShiftAmount) -> u8 {
        s.0
    }
}

/// `clip(round(x / s))`.
pub fn quantize_to_int8(x: f64, s: Pow2Scale) -> i8 {
    let q = s.divide(x).round();
    if q.is_nan() {
        return 0;
    }
    // f64 -> i64 casts saturate, so huge magnitudes still clip correctly.
    Int8Range::clip(q as i64)
}

/// `quantize_to_int8(x, s) * s`, the value an int8 pipeline actually sees.
pub fn fake_quantize(x: f64, s: Pow2Scale) -> f64 {
    quantize_to_int8(x, s) as f64 * s.value()
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(samples: &[f64]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    Some((ss / (n - 1.0)).sqrt())
}

/// Smallest power of two `s` with `127 * s >= 3 * sigma`.
pub fn calibrate_3sigma(samples: &[f64]) -> Result<Pow2Scale> {
    let sigma = sample_std(samples).ok_or(Error::DegenerateCalibration(
        "at least two samples are required",
    ))?;
    scale_for_sigma(sigma)
}

/// The 3-sigma rule applied to a known standard deviation.
pub fn scale_for_sigma(sigma: f64) -> Result<Pow2Scale> {
    if !sigma.is_finite() {
        return Err(Error::DegenerateCalibration(
            "non-finite standard deviation",
        ));
    }
    if sigma <= 0.0 {
        return Err(Error::DegenerateCalibration("standard deviation is zero"));
    }
    let target = 3.0 * sigma / Int8Range::HI as f64;
    // Relative slack absorbs the last-ulp noise of sigma; a target sitting on
    // a power of two must map to that power, not the next one.
    let target = target * (1.0 - 4.0 * f64::EPSILON);
    let mut n = target.log2().ceil() as i32;
    while 2f64.powi(n - 1) >= target {
        n -= 1;
    }
    while 2f64.powi(n) < target {
        n += 1;
    }
    Ok(Pow2Scale(n))
}

/// `S = log2(s_y / (s_a * s_w))`.
pub fn scale_to_shift(s_a: Pow2Scale, s_w: Pow2Scale, s_y: Pow2Scale) -> Result<ShiftAmount> {
    let shift = s_y.0 as i64 - s_a.0 as i64 - s_w.0 as i64;
    if !(0..=ShiftAmount::MAX as i64).contains(&shift) {
        return Err(Error::ShiftOutOfRange(shift));
    }
    Ok(ShiftAmount(shift as u8))
}

/// Offset-then-arithmetic-shift requantization with saturation.
///
/// The rounding constant is `2^(S-1)` for non-negative accumulators and
/// `2^(S-1) - 1` for negative ones, which makes ties round away from zero.
/// `S = 0` is the identity followed by the clip.
#[inline]
pub fn round_shift_clip(acc: i32, shift: ShiftAmount) -> i8 {
    Int8Range::clip(round_shift(acc, shift))
}

/// `round(acc / 2^S)` before the clip.
#[inline]
pub fn round_shift(acc: i32, shift: ShiftAmount) -> i64 {
    let s = shift.0 as u32;
    let acc = acc as i64;
    if s == 0 {
        return acc;
    }
    let half = 1i64 << (s - 1);
    let offset = if acc < 0 { half - 1 } else { half };
    (acc + offset) >> s
}
