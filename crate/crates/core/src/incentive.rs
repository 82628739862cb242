//! Mint hooks and the reward plugin.
//!
//! Hooks run when a proposer turns a witnessed proposal into a block.
//! `before_mint` hooks may only append transactions; they run after the
//! witness signatures are fixed, which is why witnesses sign a digest that
//! leaves coinbase transactions out. `after_mint` hooks observe the result.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::types::{Block, BlockHash, NodeId, Transaction, TxModel, TxOutput};

/// What a `before_mint` hook can see and do.
pub struct MintContext<'a> {
    pub parent_hash: BlockHash,
    pub height: u64,
    pub proposer: NodeId,
    pub witnesses: &'a [NodeId],
    transactions: &'a mut Vec<Transaction>,
}

impl MintContext<'_> {
    pub fn transactions(&self) -> &[Transaction] {
        self.transactions
    }

    pub fn append_transaction(&mut self, tx: Transaction) {
        self.transactions.push(tx);
    }
}

type BeforeHook = Arc<dyn Fn(&mut MintContext<'_>) + Send + Sync>;
type AfterHook = Arc<dyn Fn(&Block) + Send + Sync>;

#[derive(Clone, Default)]
pub struct MintHooks {
    before: Vec<BeforeHook>,
    after: Vec<AfterHook>,
}

impl MintHooks {
    pub fn new() -> Self {
        MintHooks::default()
    }

    pub fn before_mint(
        mut self,
        hook: impl Fn(&mut MintContext<'_>) + Send + Sync + 'static,
    ) -> Self {
        self.before.push(Arc::new(hook));
        self
    }

    pub fn after_mint(mut self, hook: impl Fn(&Block) + Send + Sync + 'static) -> Self {
        self.after.push(Arc::new(hook));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.before.is_empty() && self.after.is_empty()
    }

    pub(crate) fn run_before(
        &self,
        parent_hash: BlockHash,
        height: u64,
        proposer: NodeId,
        witnesses: &[NodeId],
        transactions: &mut Vec<Transaction>,
    ) {
        for hook in &self.before {
            let mut ctx = MintContext {
                parent_hash,
                height,
                proposer,
                witnesses,
                transactions,
            };
            hook(&mut ctx);
        }
    }

    pub(crate) fn run_after(&self, block: &Block) {
        for hook in &self.after {
            hook(block);
        }
    }
}

impl fmt::Debug for MintHooks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MintHooks")
            .field("before", &self.before.len())
            .field("after", &self.after.len())
            .finish()
    }
}

/// Block reward paid through a single coinbase transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSchedule {
    pub proposer_reward: u64,
    /// Paid to each witness whose signature is attached.
    pub witness_subsidy: u64,
    pub model: TxModel,
}

impl RewardSchedule {
    pub fn coinbase_outputs(&self, proposer: NodeId, witnesses: &[NodeId]) -> Vec<TxOutput> {
        let mut outputs = Vec::with_capacity(witnesses.len() + 1);
        if self.proposer_reward > 0 {
            outputs.push(TxOutput {
                owner: proposer,
                amount: self.proposer_reward,
            });
        }
        if self.witness_subsidy > 0 {
            outputs.extend(witnesses.iter().map(|w| TxOutput {
                owner: *w,
                amount: self.witness_subsidy,
            }));
        }
        outputs
    }

    /// Hook set that appends the coinbase. Nothing is appended when the
    /// schedule pays zero.
    pub fn hooks(self) -> MintHooks {
        MintHooks::new().before_mint(move |ctx| {
            let outputs = self.coinbase_outputs(ctx.proposer, ctx.witnesses);
            if !outputs.is_empty() {
                ctx.append_transaction(Transaction::coinbase(self.model, ctx.height, outputs));
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{TxBody, U256};
    use std::sync::Mutex;

    fn node(b: u8) -> NodeId {
        NodeId::from_public_key([b; 32])
    }

    #[test]
    fn reward_outputs() {
        let s = RewardSchedule {
            proposer_reward: 50,
            witness_subsidy: 5,
            model: TxModel::Account,
        };
        let outs = s.coinbase_outputs(node(1), &[node(2), node(3)]);
        assert_eq!(outs.len(), 3);
        assert_eq!(outs.iter().map(|o| o.amount).sum::<u64>(), 60);
        let zero = RewardSchedule {
            proposer_reward: 0,
            witness_subsidy: 0,
            model: TxModel::Utxo,
        };
        assert!(zero.coinbase_outputs(node(1), &[node(2)]).is_empty());
    }

    #[test]
    fn hooks_append_and_observe() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = Arc::clone(&seen);
        let hooks = RewardSchedule {
            proposer_reward: 7,
            witness_subsidy: 0,
            model: TxModel::Utxo,
        }
        .hooks()
        .after_mint(move |b| seen2.lock().unwrap().push(b.height()));
        let mut txs = Vec::new();
        hooks.run_before(U256::ZERO, 4, node(1), &[node(2)], &mut txs);
        assert_eq!(txs.len(), 1);
        match txs[0].body() {
            TxBody::Coinbase {
                height, outputs, ..
            } => {
                assert_eq!(*height, 4);
                assert_eq!(outputs[0].owner, node(1));
            }
            other => panic!("unexpected {other:?}"),
        }
        let block = Block::new(U256::ZERO, 4, node(1), txs);
        hooks.run_after(&block);
        assert_eq!(*seen.lock().unwrap(), vec![4]);
    }
}
