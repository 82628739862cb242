//! Seeded discrete-event simulation of the full protocol.
//!
//! Time is measured in integer ticks. Every transmission, broadcast or
//! unicast, reaches its recipient independently with probability
//! `delivery_ratio` after a sampled latency. Honest nodes follow the ledger
//! and witness rules exactly; adversarial nodes follow the configured
//! strategy.

mod config;
mod engine;
mod montecarlo;
mod queue;
mod report;
mod trials;

use std::io::Write;

use thiserror::Error;

pub use config::{AdversaryStrategy, Latency, SimConfig};
pub use engine::SIM_FUNDING;
pub use montecarlo::{
    run_miss_model, witness_monte_carlo, MissModelResult, WitnessMcConfig, WitnessMcResult,
};
pub use report::{NodeHead, SimReport};
pub use trials::{run_trials, summarize, CounterSummary, TrialsOutcome, TrialsSummary};

use crate::error::ConfigError;
use crate::ledger::ChainState;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace output: {0}")]
    Io(String),
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport, SimError> {
    Ok(engine::Simulation::new(cfg, None)?.run()?.0)
}

/// Like [`run_simulation`], also writing one JSON object per processed
/// event to `trace`.
pub fn run_simulation_traced(
    cfg: &SimConfig,
    trace: &mut dyn Write,
) -> Result<SimReport, SimError> {
    Ok(engine::Simulation::new(cfg, Some(trace))?.run()?.0)
}

/// Like [`run_simulation_traced`] with an optional trace, also returning
/// the final ledger of the first honest node (`None` when every node is
/// adversarial).
pub fn run_simulation_with_ledger(
    cfg: &SimConfig,
    trace: Option<&mut dyn Write>,
) -> Result<(SimReport, Option<ChainState>), SimError> {
    engine::Simulation::new(cfg, trace)?.run()
}
