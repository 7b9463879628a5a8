//! Small numeric helpers shared across modules.
//!
//! Aggregations that feed user-visible numbers go through compensated
//! summation in a fixed order, so results depend only on the inputs (and the
//! seed, where randomness is involved) — never on thread scheduling.

/// Neumaier's variant of Kahan compensated summation.
///
/// Compared to naive summation the error is O(eps) instead of O(n·eps),
/// which matters when summing thousands of per-follower or per-run
/// contributions of mixed magnitude.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    /// Starts an empty sum.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one term.
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Current value of the sum.
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of a slice, left to right.
pub fn sum_compensated(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sample mean and standard error of the mean.
///
/// Uses the unbiased (n−1) variance estimator; a single sample reports a
/// standard error of zero. Panics on an empty slice — callers validate run
/// counts before sampling.
pub fn mean_and_standard_error(samples: &[f64]) -> (f64, f64) {
    assert!(!samples.is_empty(), "mean of empty sample set");
    let n = samples.len() as f64;
    let mean = sum_compensated(samples) / n;
    if samples.len() == 1 {
        return (mean, 0.0);
    }
    let mut dev = CompensatedSum::new();
    for &v in samples {
        let d = v - mean;
        dev.add(d * d);
    }
    let variance = dev.value().max(0.0) / (n - 1.0);
    (mean, (variance / n).sqrt())
}

/// Relative gap |a − b| / max(|a|, |b|, floor).
///
/// The floor keeps comparisons meaningful near zero.
pub fn relative_difference(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
