use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{AnalysisError, SafetyParams};
use crate::stats::Proportion;
use crate::types::{ChainConfig, NodeId, U256};
use crate::witness::is_eligible_witness;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MissModelResult {
    pub params: SafetyParams,
    pub k: u64,
    pub trials: u64,
    pub misled: u64,
    pub frequency: f64,
    pub ci: Proportion,
}

/// Abstract loss model: each trial makes `K` independent delivery attempts
/// with success probability `r` and counts as misled when all of them fail.
pub fn run_miss_model(
    p: &SafetyParams,
    trials: u64,
    seed: u64,
) -> Result<MissModelResult, AnalysisError> {
    p.validate()?;
    let k = p.exponent();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut misled = 0u64;
    for _ in 0..trials {
        // Stop at the first delivery; the remaining draws cannot change the
        // outcome.
        if (0..k).all(|_| !rng.random_bool(p.r)) {
            misled += 1;
        }
    }
    let ci = Proportion::new(misled, trials);
    Ok(MissModelResult {
        params: *p,
        k,
        trials,
        misled,
        frequency: ci.estimate,
        ci,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessMcConfig {
    pub n_nodes: usize,
    pub q: f64,
    pub m: u32,
    pub attempts: u64,
    pub seed: u64,
    pub witness_threshold: U256,
}

impl Default for WitnessMcConfig {
    fn default() -> Self {
        WitnessMcConfig {
            n_nodes: 200,
            q: 0.5,
            m: 3,
            attempts: 100_000,
            seed: 42,
            witness_threshold: ChainConfig::default().witness_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessMcResult {
    pub config: WitnessMcConfig,
    /// Attempts whose `m` witnesses were all adversarial.
    pub fully_adversarial: Proportion,
    /// Adversarial share among all eligible witnesses seen.
    pub eligible_adversarial: Proportion,
    /// Draws discarded because the proposer had fewer than `m` eligible
    /// witnesses.
    pub redrawn: u64,
}

/// Each attempt draws fresh random node keys and independent adversary
/// flags with probability `q`, lets node 0 propose an invalid block, and
/// picks `m` distinct eligible witnesses uniformly at random. The block is
/// witnessed only when all of them are adversarial, since honest witnesses
/// refuse it.
pub fn witness_monte_carlo(cfg: &WitnessMcConfig) -> WitnessMcResult {
    let chain = ChainConfig {
        witness_threshold: cfg.witness_threshold,
        ..ChainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.m as usize;
    let (mut hits, mut done, mut redrawn) = (0u64, 0u64, 0u64);
    let (mut elig_adv, mut elig_total) = (0u64, 0u64);
    let mut eligible: Vec<bool> = Vec::with_capacity(cfg.n_nodes);
    while done < cfg.attempts {
        let proposer = NodeId::from_public_key(rng.random());
        eligible.clear();
        for _ in 1..cfg.n_nodes {
            let candidate = NodeId::from_public_key(rng.random());
            let adversarial = rng.random_bool(cfg.q);
            if is_eligible_witness(&proposer, &candidate, &chain).unwrap_or(false) {
                eligible.push(adversarial);
            }
        }
        if eligible.len() < m {
            redrawn += 1;
            continue;
        }
        done += 1;
        elig_total += eligible.len() as u64;
        elig_adv += eligible.iter().filter(|a| **a).count() as u64;
        if sample(&mut rng, eligible.len(), m)
            .iter()
            .all(|i| eligible[i])
        {
            hits += 1;
        }
    }
    WitnessMcResult {
        config: cfg.clone(),
        fully_adversarial: Proportion::new(hits, done),
        eligible_adversarial: Proportion::new(elig_adv, elig_total),
        redrawn,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_delivery_never_misleads() {
        let r = run_miss_model(&SafetyParams::new(1, 1, 0, 1.0), 10_000, 3).unwrap();
        assert_eq!(r.misled, 0);
    }

    #[test]
    fn total_loss_always_misleads() {
        // r is in (0, 1]; a tiny r makes every draw a miss in practice.
        let r = run_miss_model(&SafetyParams::new(1, 1, 0, 1e-12), 1_000, 3).unwrap();
        assert_eq!(r.misled, 1_000);
    }

    #[test]
    fn miss_model_is_seeded() {
        let p = SafetyParams::new(1, 1, 0, 0.2);
        assert_eq!(
            run_miss_model(&p, 5_000, 9).unwrap(),
            run_miss_model(&p, 5_000, 9).unwrap()
        );
    }

    #[test]
    fn witness_mc_extremes() {
        let base = WitnessMcConfig {
            n_nodes: 30,
            attempts: 200,
            ..WitnessMcConfig::default()
        };
        let none = witness_monte_carlo(&WitnessMcConfig {
            q: 0.0,
            ..base.clone()
        });
        assert_eq!(none.fully_adversarial.successes, 0);
        let all = witness_monte_carlo(&WitnessMcConfig { q: 1.0, ..base });
        assert_eq!(all.fully_adversarial.successes, 200);
    }
}
