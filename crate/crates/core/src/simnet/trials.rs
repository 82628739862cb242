use rayon::prelude::*;
use serde::Serialize;

use super::config::SimConfig;
use super::report::SimReport;
use super::{run_simulation, SimError};
use crate::stats::Proportion;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterSummary {
    pub name: &'static str,
    pub total: u64,
    pub mean: f64,
    /// Trials in which the counter was positive, with its 95% interval.
    pub nonzero: Proportion,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialsSummary {
    pub trials: usize,
    pub base_seed: u64,
    pub counters: Vec<CounterSummary>,
    /// Misled honest nodes over all honest node-runs.
    pub misled_rate: Proportion,
    pub hard_fork_rate: Proportion,
}

impl TrialsSummary {
    pub fn counter(&self, name: &str) -> Option<&CounterSummary> {
        self.counters.iter().find(|c| c.name == name)
    }

    pub fn summary_line(&self) -> String {
        let total = |n: &str| self.counter(n).map_or(0, |c| c.total);
        format!(
            "trials={} misled_events={} hard_forks={} blocks_minted={}",
            self.trials,
            total("misled_events"),
            total("hard_forks"),
            total("blocks_minted")
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialsOutcome {
    pub summary: TrialsSummary,
    pub reports: Vec<SimReport>,
}

pub fn summarize(base_seed: u64, reports: &[SimReport]) -> TrialsSummary {
    let n = reports.len() as u64;
    let mut counters: Vec<CounterSummary> = Vec::new();
    if let Some(first) = reports.first() {
        for (idx, (name, _)) in first.counters().into_iter().enumerate() {
            let values: Vec<u64> = reports.iter().map(|r| r.counters()[idx].1).collect();
            let total: u64 = values.iter().sum();
            counters.push(CounterSummary {
                name,
                total,
                mean: total as f64 / n as f64,
                nonzero: Proportion::new(values.iter().filter(|v| **v > 0).count() as u64, n),
            });
        }
    }
    let misled: u64 = reports.iter().map(|r| r.misled_events).sum();
    let honest_runs: u64 = reports.iter().map(|r| r.honest_nodes() as u64).sum();
    let forks: u64 = reports.iter().map(|r| r.hard_forks).sum();
    TrialsSummary {
        trials: reports.len(),
        base_seed,
        counters,
        misled_rate: Proportion::new(misled, honest_runs),
        hard_fork_rate: Proportion::new(forks, n),
    }
}

/// Runs `trials` independent simulations; trial `i` uses seed
/// `cfg.seed + i`. `jobs` caps worker threads (`None`: rayon default).
pub fn run_trials(
    cfg: &SimConfig,
    trials: usize,
    jobs: Option<usize>,
) -> Result<TrialsOutcome, SimError> {
    if trials == 0 {
        return Err(SimError::Config(crate::error::ConfigError::invalid(
            "trials",
            "must be a positive integer",
        )));
    }
    cfg.validate()?;
    let one = |i: usize| {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(i as u64);
        run_simulation(&c)
    };
    let reports: Result<Vec<SimReport>, SimError> = match jobs {
        Some(1) => (0..trials).map(one).collect(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| SimError::Io(e.to_string()))?
            .install(|| (0..trials).into_par_iter().map(one).collect()),
        None => (0..trials).into_par_iter().map(one).collect(),
    };
    let reports = reports?;
    Ok(TrialsOutcome {
        summary: summarize(cfg.seed, &reports),
        reports,
    })
}
