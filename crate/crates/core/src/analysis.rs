//! Closed-form safety probabilities.
//!
//! * An invalid block gathers `m` signatures only if every witness is
//!   adversarial: `q^m`.
//! * An honest node is misled only if it misses every one of
//!   `K = (m+1)(n_c+1)(m+n_c+2) + l` independent transmissions, each
//!   delivered with probability `r`: `(1-r)^K`.
//!
//! Everything is evaluated in log10 space because the interesting values
//! are far below the smallest positive `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simnet::run_miss_model;
use crate::stats::{binomial_sigma, z_score};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("parameter `{name}` = {value} is out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
}

fn out_of_range(name: &'static str, value: f64, expected: &'static str) -> AnalysisError {
    AnalysisError::OutOfRange {
        name,
        value,
        expected,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyParams {
    /// Witness signatures per block.
    pub m: u32,
    /// Confirmation depth.
    pub n_c: u32,
    /// Fork-win retransmissions.
    pub l: u32,
    /// Delivery ratio.
    pub r: f64,
    /// Adversarial fraction.
    #[serde(default)]
    pub q: f64,
}

impl SafetyParams {
    pub fn new(m: u32, n_c: u32, l: u32, r: f64) -> Self {
        SafetyParams {
            m,
            n_c,
            l,
            r,
            q: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.m == 0 {
            return Err(out_of_range("m", 0.0, "positive integer"));
        }
        if self.n_c == 0 {
            return Err(out_of_range("n_c", 0.0, "positive integer"));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(out_of_range("r", self.r, "(0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(out_of_range("q", self.q, "[0, 1]"));
        }
        Ok(())
    }

    /// Transmissions an honest node must miss to be misled.
    pub fn exponent(&self) -> u64 {
        let (m, n_c) = (u64::from(self.m), u64::from(self.n_c));
        (m + 1) * (n_c + 1) * (m + n_c + 2) + u64::from(self.l)
    }
}

/// Probability that `m` witnesses drawn from a population with adversarial
/// fraction `q` are all adversarial.
pub fn pr_invalid_witnessed(q: f64, m: u32) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(out_of_range("q", q, "[0, 1]"));
    }
    if m == 0 {
        return Err(out_of_range("m", 0.0, "positive integer"));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    Ok((f64::from(m) * q.ln()).exp())
}

/// `log10 Pr_misled`; `-inf` when `r = 1`.
pub fn log10_pr_misled(p: &SafetyParams) -> Result<f64, AnalysisError> {
    p.validate()?;
    if p.r == 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(p.exponent() as f64 * (-p.r).ln_1p() / std::f64::consts::LN_10)
}

/// `Pr_misled` in linear space. Underflows to 0 below about `1e-308`; use
/// [`log10_pr_misled`] for those regimes.
pub fn pr_misled(p: &SafetyParams) -> Result<f64, AnalysisError> {
    if p.r == 1.0 {
        p.validate()?;
        return Ok(0.0);
    }
    p.validate()?;
    Ok((p.exponent() as f64 * (-p.r).ln_1p()).exp())
}

/// A historical chain used for scale comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainScale {
    pub name: &'static str,
    pub height: u64,
    pub years: f64,
    /// Published upper bound on the chain-scale probability, as log10.
    pub bound_log10_p: f64,
    /// Published lower bound on the expected time to a hard fork, as log10
    /// years.
    pub bound_log10_years: f64,
}

/// Block heights and ages compared against in the safety table.
pub const REFERENCE_CHAINS: [ChainScale; 3] = [
    ChainScale {
        name: "Bitcoin",
        height: 751_789,
        years: 14.0,
        bound_log10_p: -47.0,
        bound_log10_years: 47.0,
    },
    ChainScale {
        name: "Ethereum",
        height: 15_437_870,
        years: 7.0,
        bound_log10_p: -45.0,
        bound_log10_years: 37.0,
    },
    ChainScale {
        name: "Solana",
        height: 148_287_091,
        years: 4.0,
        bound_log10_p: -44.0,
        bound_log10_years: 35.0,
    },
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainScaleRow {
    pub name: String,
    pub height: u64,
    pub years: f64,
    pub per_block_log10_p: f64,
    /// Union bound over every block: per-block probability times height.
    pub chain_log10_p: f64,
    pub expected_years_log10: f64,
    pub bound_log10_p: f64,
    pub bound_log10_years: f64,
}

impl ChainScaleRow {
    pub fn probability_bound_ok(&self) -> bool {
        self.chain_log10_p < self.bound_log10_p
    }

    pub fn years_bound_ok(&self) -> bool {
        self.expected_years_log10 > self.bound_log10_years
    }

    pub fn bound_ok(&self) -> bool {
        self.probability_bound_ok() && self.years_bound_ok()
    }
}

pub fn table1_rows(
    per_block: &SafetyParams,
    chains: &[ChainScale],
) -> Result<Vec<ChainScaleRow>, AnalysisError> {
    let per_block_log10_p = log10_pr_misled(per_block)?;
    Ok(chains
        .iter()
        .map(|c| {
            let chain_log10_p = per_block_log10_p + (c.height as f64).log10();
            ChainScaleRow {
                name: c.name.to_string(),
                height: c.height,
                years: c.years,
                per_block_log10_p,
                chain_log10_p,
                expected_years_log10: c.years.log10() - chain_log10_p,
                bound_log10_p: c.bound_log10_p,
                bound_log10_years: c.bound_log10_years,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fig5Row {
    pub r: f64,
    pub m: u32,
    pub k: u64,
    pub log10_pr: f64,
}

/// `log10 Pr_misled` over a grid of `r` and `m` with `l = 0`, grouped by
/// `r` in the given order.
pub fn fig5_dataset(
    n_c: u32,
    m_range: std::ops::RangeInclusive<u32>,
    r_values: &[f64],
) -> Result<Vec<Fig5Row>, AnalysisError> {
    let mut rows = Vec::new();
    for &r in r_values {
        for m in m_range.clone() {
            let p = SafetyParams::new(m, n_c, 0, r);
            rows.push(Fig5Row {
                r,
                m,
                k: p.exponent(),
                log10_pr: log10_pr_misled(&p)?,
            });
        }
    }
    Ok(rows)
}

pub const FIG5_R_VALUES: [f64; 4] = [0.6, 0.7, 0.8, 0.9];

/// Minimum expected number of misled trials for an empirical comparison.
pub const MIN_EXPECTED_EVENTS: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Comparison {
    Measured {
        params: SafetyParams,
        trials: u64,
        analytic: f64,
        empirical: f64,
        misled: u64,
        z: f64,
        agree: bool,
    },
    NotMeasurable {
        params: SafetyParams,
        trials: u64,
        analytic_log10: f64,
        expected_events: f64,
    },
}

impl Comparison {
    pub fn agrees(&self) -> Option<bool> {
        match self {
            Comparison::Measured { agree, .. } => Some(*agree),
            Comparison::NotMeasurable { .. } => None,
        }
    }
}

/// Runs the miss model and compares it with the closed form. Regimes with
/// fewer than [`MIN_EXPECTED_EVENTS`] expected hits are reported as not
/// measurable rather than run.
pub fn compare_analytic_empirical(
    p: &SafetyParams,
    trials: u64,
    seed: u64,
) -> Result<Comparison, AnalysisError> {
    let log10 = log10_pr_misled(p)?;
    let expected = 10f64.powf(log10) * trials as f64;
    if expected < MIN_EXPECTED_EVENTS {
        return Ok(Comparison::NotMeasurable {
            params: *p,
            trials,
            analytic_log10: log10,
            expected_events: expected,
        });
    }
    let analytic = pr_misled(p)?;
    let res = run_miss_model(p, trials, seed)?;
    let z = z_score(res.misled, trials, analytic);
    Ok(Comparison::Measured {
        params: *p,
        trials,
        analytic,
        empirical: res.frequency,
        misled: res.misled,
        z,
        agree: z.abs() <= 3.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioTest {
    pub base: SafetyParams,
    pub extra_l: u32,
    pub expected_ratio: f64,
    pub empirical_ratio: f64,
    /// Standard error of the log ratio (delta method).
    pub log_ratio_se: f64,
    pub z: f64,
    pub agree: bool,
}

/// Compares miss-model frequencies at `l = base.l + extra_l` and `base.l`
/// against the predicted factor `(1-r)^extra_l`.
pub fn l_ratio_test(
    base: &SafetyParams,
    extra_l: u32,
    trials: u64,
    seed: u64,
) -> Result<RatioTest, AnalysisError> {
    let hi = SafetyParams {
        l: base.l + extra_l,
        ..*base
    };
    let lo_run = run_miss_model(base, trials, seed)?;
    let hi_run = run_miss_model(&hi, trials, seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
    let expected_ratio = (f64::from(extra_l) * (-base.r).ln_1p()).exp();
    let (p0, p1) = (lo_run.frequency, hi_run.frequency);
    let empirical_ratio = if p0 > 0.0 { p1 / p0 } else { f64::NAN };
    let se = ((1.0 - p0) / (trials as f64 * p0) + (1.0 - p1) / (trials as f64 * p1)).sqrt();
    let z = (empirical_ratio.ln() - expected_ratio.ln()) / se;
    Ok(RatioTest {
        base: *base,
        extra_l,
        expected_ratio,
        empirical_ratio,
        log_ratio_se: se,
        z,
        agree: z.is_finite() && z.abs() <= 3.0,
    })
}

/// Three-sigma band half-width around `p` for `n` binomial trials.
pub fn three_sigma(p: f64, n: u64) -> f64 {
    3.0 * binomial_sigma(p, n)
}
