//! Shared inputs for the criterion benches.

use cbchain_core::testkit::Fixture;
use cbchain_core::{Block, Transaction};

/// First key with enough eligible witnesses to mint.
pub fn proposer(f: &Fixture) -> usize {
    (0..f.keys.len())
        .find(|&p| f.eligible_for(p).len() >= f.config.witness_m as usize)
        .expect("fixture has a proposer with enough witnesses")
}

/// Account transfers for height `h`: one per sender, round-robin over the
/// fixture keys.
pub fn transfers(f: &Fixture, h: u64, count: usize) -> Vec<Transaction> {
    let n = f.keys.len();
    (0..count.min(n))
        .map(|s| f.transfer(s, (s + 1) % n, 1, h))
        .collect()
}

/// A fully witnessed chain of `len` blocks on genesis, each carrying
/// `txs_per_block` transfers.
pub fn linear_chain(f: &Fixture, len: usize, txs_per_block: usize) -> Vec<Block> {
    let p = proposer(f);
    let mut parent = f.genesis();
    let mut out = Vec::with_capacity(len);
    for h in 0..len as u64 {
        let b = f.block_on(&parent, p, transfers(f, h, txs_per_block));
        parent = b.clone();
        out.push(b);
    }
    out
}
