//! Block priority among same-height competitors.
//!
//! The score is the SHA-256 of every transaction's inputs and outputs,
//! concatenated in ascending `tx_id` order. Lower scores win; equal scores
//! fall back to the lower block hash so the order is total.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::codec::Writer;
use crate::crypto::hash256;
use crate::types::{Block, Transaction, TxBody, U256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BlockScore(pub U256);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("block has no transactions; score undefined")]
    EmptyBlock,
    #[error("blocks at heights {0} and {1} are not comparable")]
    HeightMismatch(u64, u64),
    #[error("a block cannot be compared with itself")]
    SameBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockOrdering {
    AWins,
    BWins,
}

/// Appends one transaction's score contribution: a kind byte, its input
/// bytes and its output bytes.
fn write_score_piece(w: &mut Writer, tx: &Transaction) {
    match tx.body() {
        TxBody::Account {
            recipient,
            amount,
            nonce,
        } => {
            w.u8(0);
            w.node(tx.sender());
            w.u64(*nonce);
            w.u64(*amount);
            w.len(1);
            w.node(recipient);
            w.u64(*amount);
        }
        TxBody::Utxo { inputs, outputs } => {
            w.u8(1);
            w.outpoints(inputs);
            w.outputs(outputs);
        }
        TxBody::Coinbase {
            model,
            height,
            outputs,
        } => {
            w.u8(2);
            w.model(*model);
            w.u64(*height);
            w.outputs(outputs);
        }
    }
}

/// Score preimage for a set of transactions. Exposed so tests can check the
/// construction independently of the hash.
pub fn score_preimage(transactions: &[Transaction]) -> Vec<u8> {
    let mut sorted: Vec<&Transaction> = transactions.iter().collect();
    sorted.sort_by_key(|t| t.tx_id());
    let mut w = Writer::with_capacity(transactions.len() * 100);
    for tx in sorted {
        write_score_piece(&mut w, tx);
    }
    w.into_inner()
}

pub fn score_transactions(transactions: &[Transaction]) -> Result<BlockScore, ScoreError> {
    if transactions.is_empty() {
        return Err(ScoreError::EmptyBlock);
    }
    Ok(BlockScore(hash256(&score_preimage(transactions))))
}

pub fn block_score(block: &Block) -> Result<BlockScore, ScoreError> {
    if let Some(s) = block.score.get() {
        return Ok(BlockScore(*s));
    }
    let s = score_transactions(block.transactions())?;
    Ok(BlockScore(*block.score.get_or_init(|| s.0)))
}

/// Total order key: score first, then block hash.
pub(crate) fn priority_key(score: BlockScore, block: &Block) -> (BlockScore, U256) {
    (score, block.block_hash())
}

pub fn compare_blocks(a: &Block, b: &Block) -> Result<BlockOrdering, ScoreError> {
    if a.height() != b.height() {
        return Err(ScoreError::HeightMismatch(a.height(), b.height()));
    }
    if a.block_hash() == b.block_hash() {
        return Err(ScoreError::SameBlock);
    }
    let ka = priority_key(block_score(a)?, a);
    let kb = priority_key(block_score(b)?, b);
    Ok(match ka.cmp(&kb) {
        Ordering::Less => BlockOrdering::AWins,
        Ordering::Greater => BlockOrdering::BWins,
        Ordering::Equal => unreachable!("distinct hashes"),
    })
}
