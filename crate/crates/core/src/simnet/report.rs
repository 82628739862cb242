use std::collections::BTreeMap;

use serde::Serialize;

use crate::types::{BlockHash, NodeId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeHead {
    pub node: usize,
    pub id: NodeId,
    pub adversary: bool,
    pub head: BlockHash,
    pub height: u64,
    pub confirmed_height: u64,
}

/// Outcome of one simulation run. Every counter is a plain count over the
/// run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub n_nodes: usize,
    pub n_adversaries: usize,
    /// Honest nodes that at any time confirmed a block conflicting with the
    /// majority's final confirmed prefix.
    pub misled_events: u64,
    /// 1 when honest final confirmed prefixes are not all prefixes of one
    /// another, else 0.
    pub hard_forks: u64,
    /// Blocks with an invalid transaction that still gathered `m`
    /// signatures.
    pub invalid_minted: u64,
    pub blocks_minted: u64,
    /// Conflicting transaction pairs sent by double-spending adversaries.
    pub double_spend_pairs: u64,
    /// User transactions in the confirmed prefix common to all honest
    /// nodes.
    pub txs_confirmed: u64,
    pub fork_win_msgs: u64,
    pub fork_switches: u64,
    /// Fork switches that abandoned a confirmed block.
    pub confirmed_reverts: u64,
    pub replay_checks: u64,
    pub replay_mismatches: u64,
    pub conservation_violations: u64,
    /// Honest nodes whose confirmed prefix ever held two conflicting
    /// transactions.
    pub conflicting_confirmed: u64,
    /// Invalid blocks refused by honest ledgers.
    pub invalid_rejected: u64,
    /// Invalid blocks accepted by an honest ledger. Always zero unless
    /// validation is broken.
    pub invalid_accepted: u64,
    pub prefixes_identical: bool,
    pub common_confirmed_height: u64,
    pub proposals: u64,
    pub witness_refusals: BTreeMap<String, u64>,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub events_processed: u64,
    pub heads: Vec<NodeHead>,
}

impl SimReport {
    /// Named scalar counters, in a fixed order, for CSV and aggregation.
    pub fn counters(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("misled_events", self.misled_events),
            ("hard_forks", self.hard_forks),
            ("invalid_minted", self.invalid_minted),
            ("blocks_minted", self.blocks_minted),
            ("double_spend_pairs", self.double_spend_pairs),
            ("txs_confirmed", self.txs_confirmed),
            ("fork_win_msgs", self.fork_win_msgs),
            ("fork_switches", self.fork_switches),
            ("confirmed_reverts", self.confirmed_reverts),
            ("replay_checks", self.replay_checks),
            ("replay_mismatches", self.replay_mismatches),
            ("conservation_violations", self.conservation_violations),
            ("conflicting_confirmed", self.conflicting_confirmed),
            ("invalid_rejected", self.invalid_rejected),
            ("invalid_accepted", self.invalid_accepted),
            ("prefixes_identical", u64::from(self.prefixes_identical)),
            ("common_confirmed_height", self.common_confirmed_height),
            ("proposals", self.proposals),
            ("messages_sent", self.messages_sent),
            ("messages_delivered", self.messages_delivered),
            ("events_processed", self.events_processed),
        ]
    }

    pub fn honest_nodes(&self) -> usize {
        self.n_nodes - self.n_adversaries
    }

    pub fn summary_line(&self) -> String {
        format!(
            "seed={} misled_events={} hard_forks={} blocks_minted={}",
            self.seed, self.misled_events, self.hard_forks, self.blocks_minted
        )
    }
}
