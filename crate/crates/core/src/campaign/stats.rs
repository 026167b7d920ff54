//! Counting statistics: exact magnitude histograms, quartiles and
//! binomial confidence intervals.

use serde::{Deserialize, Serialize};

use crate::registry::{RegGroup, RegistryCensus};

/// Two-sided 95 % standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Output magnitudes are differences of two int8 values.
pub const MAGNITUDE_BINS: usize = 256;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Injection tally of one register group. Merging is associative and
/// commutative, so any partition of the records gives the same totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTally {
    pub injections: u64,
    pub propagations: u64,
    histogram: Box<[u64; MAGNITUDE_BINS]>,
}

impl Default for GroupTally {
    fn default() -> Self {
        Self {
            injections: 0,
            propagations: 0,
            histogram: Box::new([0; MAGNITUDE_BINS]),
        }
    }
}

impl GroupTally {
    pub fn record(&mut self, propagated: bool, magnitude: u32) {
        self.injections += 1;
        if propagated {
            self.propagations += 1;
            let bin = (magnitude as usize).min(MAGNITUDE_BINS - 1);
            self.histogram[bin] += 1;
        }
    }

    pub fn merge(&mut self, other: &GroupTally) {
        self.injections += other.injections;
        self.propagations += other.propagations;
        for (a, b) in self.histogram.iter_mut().zip(other.histogram.iter()) {
            *a += b;
        }
    }

    /// Count of propagated faults per magnitude.
    pub fn histogram(&self) -> &[u64; MAGNITUDE_BINS] {
        &self.histogram
    }

    pub fn summary(&self) -> Option<MagnitudeSummary> {
        MagnitudeSummary::from_histogram(&self.histogram[..])
    }
}

/// Per-group tallies of one array size.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SizeTally {
    pub groups: [GroupTally; 8],
}

impl SizeTally {
    pub fn record(&mut self, group: RegGroup, propagated: bool, magnitude: u32) {
        self.groups[group.index()].record(propagated, magnitude);
    }

    pub fn merge(&mut self, other: &SizeTally) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.merge(b);
        }
    }

    pub fn group(&self, group: RegGroup) -> &GroupTally {
        &self.groups[group.index()]
    }

    pub fn injections(&self) -> u64 {
        self.groups.iter().map(|g| g.injections).sum()
    }

    pub fn stats(&self, census: &RegistryCensus) -> Vec<GroupStats> {
        RegGroup::ALL
            .iter()
            .map(|&group| {
                let t = self.group(group);
                let (lo, hi) = wilson_interval(t.propagations, t.injections, Z95);
                GroupStats {
                    group,
                    ff_bits: census.bits(group),
                    ff_ratio: census.ratio(group),
                    injections: t.injections,
                    propagations: t.propagations,
                    propagation_ratio: if t.injections == 0 {
                        0.0
                    } else {
                        t.propagations as f64 / t.injections as f64
                    },
                    propagation_ci95: [lo, hi],
                    magnitude: t.summary(),
                }
            })
            .collect()
    }
}

/// Five-number summary plus mean of the propagated magnitudes. Quartiles
/// use the exclusive median-of-halves rule: with `n` sorted values the
/// lower half is the first `floor(n/2)` and the upper half the last
/// `floor(n/2)`; a single value is its own quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeSummary {
    pub min: u32,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: u32,
    pub mean: f64,
    pub n: u64,
}

impl MagnitudeSummary {
    /// `counts[m]` is the number of occurrences of magnitude `m`.
    pub fn from_histogram(counts: &[u64]) -> Option<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return None;
        }
        let nth = |k: u64| -> u32 {
            let mut seen = 0;
            for (m, &c) in counts.iter().enumerate() {
                seen += c;
                if seen > k {
                    return m as u32;
                }
            }
            unreachable!("order statistic beyond sample size")
        };
        // median of the sorted sub-sample [lo, lo + len)
        let median_of = |lo: u64, len: u64| -> f64 {
            if len % 2 == 1 {
                nth(lo + len / 2) as f64
            } else {
                (nth(lo + len / 2 - 1) as f64 + nth(lo + len / 2) as f64) / 2.0
            }
        };
        let half = n / 2;
        let (q1, q3) = if half == 0 {
            let v = nth(0) as f64;
            (v, v)
        } else {
            (median_of(0, half), median_of(n - half, half))
        };
        let sum: u64 = counts.iter().enumerate().map(|(m, &c)| m as u64 * c).sum();
        Some(Self {
            min: nth(0),
            q1,
            median: median_of(0, n),
            q3,
            max: nth(n - 1),
            mean: sum as f64 / n as f64,
            n,
        })
    }

    pub fn from_sample(sample: &[u32]) -> Option<Self> {
        let top = sample.iter().copied().max()? as usize;
        let mut counts = vec![0u64; top + 1];
        for &m in sample {
            counts[m as usize] += 1;
        }
        Self::from_histogram(&counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: RegGroup,
    pub ff_bits: u64,
    pub ff_ratio: f64,
    pub injections: u64,
    pub propagations: u64,
    pub propagation_ratio: f64,
    pub propagation_ci95: [f64; 2],
    /// `None` when nothing in the group propagated.
    pub magnitude: Option<MagnitudeSummary>,
}
