//! Binomial estimates and confidence intervals.

use serde::Serialize;

/// Standard normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // The bounds are exactly 0 and 1 at the extremes; the subtraction above
    // only approximates that.
    let low = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let high = if successes == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (low, high)
}

/// Standard deviation of a binomial proportion with true rate `p`.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `(observed - p) / sigma`; zero when the variance vanishes and the
/// observation matches.
pub fn z_score(successes: u64, n: u64, p: f64) -> f64 {
    let observed = successes as f64 / n as f64;
    let sigma = binomial_sigma(p, n);
    if sigma == 0.0 {
        return if observed == p { 0.0 } else { f64::INFINITY };
    }
    (observed - p) / sigma
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, trials, Z95);
        Proportion {
            successes,
            trials,
            estimate: if trials == 0 {
                0.0
            } else {
                successes as f64 / trials as f64
            },
            ci_low,
            ci_high,
        }
    }
}
