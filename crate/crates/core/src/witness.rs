//! Witness selection, signing and minting.
//!
//! A node is an eligible witness for a proposer when the XOR distance
//! between their key digests is below the configured threshold. A block is
//! minted once `m` distinct eligible witnesses have signed its digest.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::crypto::Keypair;
use crate::incentive::MintHooks;
use crate::ledger::{check_transaction, execute_transaction, ChainState, RejectReason};
use crate::scoring::{block_score, priority_key};
use crate::types::{Block, ChainConfig, NodeId, Transaction, WitnessSignature, U256};

const WITNESS_DOMAIN: &[u8] = b"cbchain/witness/v1";

pub fn distance(a: &NodeId, b: &NodeId) -> U256 {
    a.key_digest().xor(&b.key_digest())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("a proposer cannot witness its own block")]
pub struct SelfWitness;

pub fn is_eligible_witness(
    proposer: &NodeId,
    candidate: &NodeId,
    config: &ChainConfig,
) -> Result<bool, SelfWitness> {
    if proposer == candidate {
        return Err(SelfWitness);
    }
    Ok(distance(proposer, candidate) < config.witness_threshold)
}

/// Eligible witnesses for `proposer` among `nodes`, proposer excluded.
pub fn eligible_witnesses<'a>(
    proposer: &'a NodeId,
    nodes: impl IntoIterator<Item = &'a NodeId>,
    config: &'a ChainConfig,
) -> impl Iterator<Item = &'a NodeId> {
    nodes
        .into_iter()
        .filter(move |n| is_eligible_witness(proposer, n, config).unwrap_or(false))
}

/// Bytes a witness signs for a block digest.
pub fn witness_message(digest: &U256) -> Vec<u8> {
    let mut msg = Vec::with_capacity(WITNESS_DOMAIN.len() + 32);
    msg.extend_from_slice(WITNESS_DOMAIN);
    msg.extend_from_slice(digest.as_bytes());
    msg
}

/// A proposed block awaiting witness signatures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessRequest {
    pub digest: U256,
    pub proposer: NodeId,
    pub block: Arc<Block>,
}

impl WitnessRequest {
    pub fn new(block: Block) -> Self {
        WitnessRequest {
            digest: block.witness_digest(),
            proposer: *block.proposer(),
            block: Arc::new(block),
        }
    }

    pub fn height(&self) -> u64 {
        self.block.height()
    }

    fn is_consistent(&self) -> bool {
        self.digest == self.block.witness_digest()
            && self.proposer == *self.block.proposer()
            && self.block.witness_sigs().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProposeError {
    #[error("not ready: {valid} valid transactions, need {needed}")]
    NotReady { valid: usize, needed: usize },
}

/// Builds a proposal on the current head from `mempool`, keeping each
/// transaction that is valid after the ones already chosen. Transactions
/// rejected in one pass are retried while the selection keeps growing, so
/// nonce order in the pool does not matter.
pub fn propose_block<'a>(
    proposer: NodeId,
    chain: &ChainState,
    mempool: impl IntoIterator<Item = &'a Transaction>,
    max_txs: usize,
) -> Result<WitnessRequest, ProposeError> {
    let config = chain.config();
    let needed = config.tx_count_min as usize;
    let head = chain.main_head();
    let height = chain.head_height() + 1;
    let mut ov = chain.overlay_at(&head);
    let mut chosen: Vec<Transaction> = Vec::new();
    let mut pending: Vec<&Transaction> = mempool.into_iter().filter(|t| !t.is_coinbase()).collect();
    loop {
        let before = chosen.len();
        pending.retain(|tx| {
            if chosen.len() >= max_txs {
                return true;
            }
            if check_transaction(&ov, tx, Some(height), config.sig_scheme).is_ok() {
                execute_transaction(&mut ov, tx);
                chosen.push((*tx).clone());
                false
            } else {
                true
            }
        });
        if chosen.len() == before || chosen.len() >= max_txs || pending.is_empty() {
            break;
        }
    }
    if chosen.len() < needed || chosen.is_empty() {
        return Err(ProposeError::NotReady {
            valid: chosen.len(),
            needed,
        });
    }
    Ok(WitnessRequest::new(Block::new(
        head, height, proposer, chosen,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Error)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Refusal {
    #[error("ineligible")]
    Ineligible,
    #[error("invalid_block ({cause})")]
    InvalidBlock { cause: RejectReason },
    #[error("lower_score_exists")]
    LowerScoreExists,
    #[error("already_witnessed_height")]
    AlreadyWitnessedHeight,
}

impl Refusal {
    pub fn code(&self) -> &'static str {
        match self {
            Refusal::Ineligible => "ineligible",
            Refusal::InvalidBlock { .. } => "invalid_block",
            Refusal::LowerScoreExists => "lower_score_exists",
            Refusal::AlreadyWitnessedHeight => "already_witnessed_height",
        }
    }
}

/// Per-height signing locks of one witness. A lock stops the witness from
/// signing a second block at the same height; it lapses after `timeout`
/// so a proposal that never gets minted cannot stall the height forever.
#[derive(Clone, Debug)]
pub struct WitnessBook {
    timeout: f64,
    locks: BTreeMap<u64, (U256, f64)>,
}

impl WitnessBook {
    pub fn new(timeout: f64) -> Self {
        WitnessBook {
            timeout,
            locks: BTreeMap::new(),
        }
    }

    pub fn lock(&self, height: u64) -> Option<U256> {
        self.locks.get(&height).map(|(d, _)| *d)
    }

    fn blocks(&self, height: u64, digest: &U256, now: f64) -> bool {
        match self.locks.get(&height) {
            Some((d, at)) => d != digest && now - at < self.timeout,
            None => false,
        }
    }

    /// Forgets locks below `height`.
    pub fn prune_below(&mut self, height: u64) {
        self.locks = self.locks.split_off(&height);
    }
}

/// Decides whether the holder of `keypair` signs `request`, checking in
/// order: eligibility, an earlier signature at this height, block validity,
/// and a better competitor known at the same height and parent.
pub fn sign_witness(
    keypair: &Keypair,
    request: &WitnessRequest,
    chain: &ChainState,
    book: &mut WitnessBook,
    now: f64,
) -> Result<WitnessSignature, Refusal> {
    let me = keypair.node_id();
    if !is_eligible_witness(&request.proposer, &me, chain.config()).unwrap_or(false) {
        return Err(Refusal::Ineligible);
    }
    if !request.is_consistent() {
        return Err(Refusal::InvalidBlock {
            cause: RejectReason::Malformed,
        });
    }
    let block = &request.block;
    if book.blocks(block.height(), &request.digest, now) {
        return Err(Refusal::AlreadyWitnessedHeight);
    }
    chain
        .validate_proposal(block)
        .map_err(|cause| Refusal::InvalidBlock { cause })?;
    let mine = priority_key(
        block_score(block).expect("validated proposals have transactions"),
        block,
    );
    let better_known = chain.blocks_at_height(block.height()).any(|b| {
        b.parent_hash() == block.parent_hash()
            && priority_key(chain.score_of(&b.block_hash()).expect("stored"), b) < mine
    });
    if better_known {
        return Err(Refusal::LowerScoreExists);
    }
    // Re-signing the same proposal keeps the original lock time.
    match book.locks.get(&block.height()) {
        Some((d, _)) if *d == request.digest => {}
        _ => {
            book.locks.insert(block.height(), (request.digest, now));
        }
    }
    Ok(WitnessSignature {
        witness: me,
        signature: keypair.sign(&witness_message(&request.digest)),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MintError {
    #[error("{have} distinct valid witness signatures, need {need}")]
    NotEnoughWitnesses { have: usize, need: usize },
}

/// Attaches the valid, distinct signatures from `sigs` (sorted by witness)
/// and runs the mint hooks. Invalid, ineligible and repeated signatures are
/// dropped silently.
pub fn mint_block(
    request: &WitnessRequest,
    sigs: &[WitnessSignature],
    config: &ChainConfig,
    hooks: &MintHooks,
) -> Result<Block, MintError> {
    let msg = witness_message(&request.digest);
    let mut valid: BTreeMap<NodeId, WitnessSignature> = BTreeMap::new();
    for ws in sigs {
        if valid.contains_key(&ws.witness) {
            continue;
        }
        let eligible = is_eligible_witness(&request.proposer, &ws.witness, config).unwrap_or(false);
        if eligible && config.sig_scheme.verify(&ws.witness, &msg, &ws.signature) {
            valid.insert(ws.witness, ws.clone());
        }
    }
    let need = config.witness_m as usize;
    if valid.len() < need {
        return Err(MintError::NotEnoughWitnesses {
            have: valid.len(),
            need,
        });
    }
    let witnesses: Vec<NodeId> = valid.keys().copied().collect();
    let attached: Vec<WitnessSignature> = valid.into_values().collect();

    let b = &request.block;
    let mut txs = b.transactions().to_vec();
    hooks.run_before(
        b.parent_hash(),
        b.height(),
        request.proposer,
        &witnesses,
        &mut txs,
    );
    // Hooks can only append, so an unchanged length means unchanged content.
    let block = if txs.len() == b.transactions().len() {
        Block::clone(b)
    } else {
        Block::new(b.parent_hash(), b.height(), request.proposer, txs)
    }
    .with_witness_sigs(attached);
    hooks.run_after(&block);
    Ok(block)
}
