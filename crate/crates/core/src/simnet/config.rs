use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::SigScheme;
use crate::error::ConfigError;
use crate::incentive::RewardSchedule;
use crate::types::{ChainConfig, TxModel};

/// Message latency in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Latency {
    Fixed { ticks: u64 },
    Uniform { lo: u64, hi: u64 },
}

impl Latency {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        match *self {
            Latency::Fixed { ticks } => ticks,
            Latency::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    pub fn max(&self) -> u64 {
        match *self {
            Latency::Fixed { ticks } => ticks,
            Latency::Uniform { hi, .. } => hi,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryStrategy {
    /// Adversarial nodes stay silent.
    #[default]
    None,
    /// Send conflicting transaction pairs to disjoint halves of the network.
    DoubleSpend,
    /// Propose two conflicting blocks per height and push each to half the
    /// network.
    Equivocate,
    /// Propose blocks with an invalid transaction and collect colluding
    /// witness signatures.
    InvalidBlockPush,
}

/// Parameters of one simulation run. Field names double as config-file
/// keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_nodes: usize,
    /// Fraction q of adversarial nodes; the count is `round(q * n_nodes)`.
    #[serde(alias = "q")]
    pub adversary_fraction: f64,
    /// Per-recipient delivery probability r of every transmission.
    #[serde(alias = "r")]
    pub delivery_ratio: f64,
    pub latency: Latency,
    pub chain: ChainConfig,
    /// Mean transactions injected per tick.
    pub tx_rate: f64,
    /// Ticks during which transactions are injected and blocks proposed.
    pub duration: u64,
    pub seed: u64,
    pub adversary_strategy: AdversaryStrategy,
    pub tx_model: TxModel,
    pub propose_interval: u64,
    /// Ticks a proposer waits for witnesses and a witness holds its
    /// per-height lock.
    pub proposal_timeout: u64,
    pub max_block_txs: usize,
    /// Extra retransmissions l of every fork-win broadcast.
    #[serde(alias = "l")]
    pub fork_win_repeats: u32,
    pub status_interval: u64,
    /// Ticks after `duration` with gossip and sync but no new blocks.
    pub settle_ticks: u64,
    pub mempool_capacity: usize,
    /// Genesis UTXOs per node under the UTXO model.
    pub utxos_per_node: usize,
    /// Conflicting pairs each double-spending adversary emits per tick.
    pub adversary_tx_rate: f64,
    pub reward: Option<RewardSchedule>,
    /// Compare the incremental index with a full replay after every fork
    /// switch.
    pub check_replay: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_nodes: 20,
            adversary_fraction: 0.0,
            delivery_ratio: 0.9,
            latency: Latency::Uniform { lo: 1, hi: 3 },
            chain: ChainConfig {
                sig_scheme: SigScheme::KeyedHash,
                ..ChainConfig::default()
            },
            tx_rate: 2.0,
            duration: 200,
            seed: 42,
            adversary_strategy: AdversaryStrategy::None,
            tx_model: TxModel::Account,
            propose_interval: 10,
            proposal_timeout: 8,
            max_block_txs: 32,
            fork_win_repeats: 0,
            status_interval: 10,
            settle_ticks: 60,
            mempool_capacity: 4096,
            utxos_per_node: 8,
            adversary_tx_rate: 0.2,
            reward: None,
            check_replay: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |k: &str, m: &str| Err(ConfigError::invalid(k, m));
        if self.n_nodes == 0 {
            return bad("n_nodes", "must be a positive integer");
        }
        if !(0.0..=1.0).contains(&self.adversary_fraction) {
            return bad("adversary_fraction", "must lie in [0, 1]");
        }
        if !(self.delivery_ratio > 0.0 && self.delivery_ratio <= 1.0) {
            return bad("delivery_ratio", "must lie in (0, 1]");
        }
        match self.latency {
            Latency::Fixed { ticks: 0 } => return bad("latency", "must be at least one tick"),
            Latency::Uniform { lo, hi } if lo == 0 || lo > hi => {
                return bad("latency", "needs 1 <= lo <= hi")
            }
            _ => {}
        }
        self.chain.validate().map_err(|e| ConfigError {
            key: format!("chain.{}", e.key),
            message: e.message,
        })?;
        if !(self.tx_rate.is_finite() && self.tx_rate >= 0.0) {
            return bad("tx_rate", "must be a non-negative number");
        }
        if !(self.adversary_tx_rate.is_finite() && self.adversary_tx_rate >= 0.0) {
            return bad("adversary_tx_rate", "must be a non-negative number");
        }
        let positive = [
            ("duration", self.duration),
            ("propose_interval", self.propose_interval),
            ("proposal_timeout", self.proposal_timeout),
            ("status_interval", self.status_interval),
            ("max_block_txs", self.max_block_txs as u64),
            ("mempool_capacity", self.mempool_capacity as u64),
        ];
        for (key, v) in positive {
            if v == 0 {
                return bad(key, "must be a positive integer");
            }
        }
        if self.max_block_txs < self.chain.tx_count_min as usize {
            return bad("max_block_txs", "must be at least chain.tx_count_min");
        }
        if self.tx_model == TxModel::Utxo && self.utxos_per_node == 0 {
            return bad("utxos_per_node", "must be positive under the utxo model");
        }
        if let Some(r) = &self.reward {
            if r.model != self.tx_model {
                return bad("reward.model", "must match tx_model");
            }
        }
        Ok(())
    }

    pub fn n_adversaries(&self) -> usize {
        (self.adversary_fraction * self.n_nodes as f64).round() as usize
    }
}
