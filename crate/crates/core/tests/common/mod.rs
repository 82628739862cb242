//! Random block trees shared by the fork-choice tests.

#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use cbchain_core::testkit::Fixture;
use cbchain_core::{Block, BlockHash, ChainState};

/// A random tree of blocks over `f`'s genesis, in creation order. Valid
/// blocks build on earlier valid blocks; with probability `invalid_rate`
/// a block instead reuses a nonce and is left as a leaf.
pub fn random_block_set<R: Rng>(
    f: &Fixture,
    rng: &mut R,
    size: usize,
    invalid_rate: f64,
) -> Vec<Block> {
    let n = f.keys.len();
    let proposers: Vec<usize> = (0..n)
        .filter(|&p| f.eligible_for(p).len() >= f.config.witness_m as usize)
        .collect();
    let mut valid: Vec<(Block, Vec<u64>)> = vec![(f.genesis(), vec![0; n])];
    let mut out = Vec::new();
    for _ in 0..size {
        // Favor recent blocks so branches grow long enough to matter.
        let lo = valid.len().saturating_sub(6);
        let pick = if rng.random_bool(0.8) {
            rng.random_range(lo..valid.len())
        } else {
            rng.random_range(0..valid.len())
        };
        let (parent, mut nonces) = (valid[pick].0.clone(), valid[pick].1.clone());
        let invalid = rng.random_bool(invalid_rate);
        let mut senders: Vec<usize> = (0..n).collect();
        senders.shuffle(rng);
        let k = rng.random_range(2..=4);
        let mut txs = Vec::with_capacity(k);
        for &s in &senders[..k] {
            let to = (s + rng.random_range(1..n)) % n;
            let nonce = if invalid && txs.is_empty() {
                nonces[s] + 1
            } else {
                nonces[s]
            };
            txs.push(f.transfer(s, to, rng.random_range(1..=100), nonce));
            nonces[s] += 1;
        }
        let proposer = *proposers.choose(rng).expect("some proposer has witnesses");
        let block = f.block_on(&parent, proposer, txs);
        out.push(block.clone());
        if !invalid {
            valid.push((block, nonces));
        }
    }
    out
}

/// Fresh ledger fed `blocks` in order.
pub fn ledger_after(f: &Fixture, blocks: &[Block]) -> ChainState {
    let mut chain = f.chain();
    for b in blocks {
        let _ = chain.apply_block(Arc::new(b.clone()));
    }
    chain
}

pub fn head_after(f: &Fixture, blocks: &[Block]) -> BlockHash {
    let chain = ledger_after(f, blocks);
    assert_eq!(chain.orphan_count(), 0, "every block connects");
    chain.main_head()
}
