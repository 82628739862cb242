//! Transaction indices (balances, nonces, UTXO set) and the rules that
//! check and apply transactions against them.
//!
//! The same generic code drives three stores: the node's main [`TxIndex`],
//! a copy-on-write [`Overlay`] used to evaluate side branches without
//! touching the main index, and a [`Journaled`] wrapper that records undo
//! entries so a reorg can unwind main-chain blocks.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::crypto::SigScheme;
use crate::types::{Block, GenesisAlloc, NodeId, OutPoint, Transaction, TxBody, TxModel, TxOutput};

/// Why a transaction is invalid against some ledger state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TxInvalid {
    BadSignature,
    /// Account nonce already used.
    NonceReuse,
    /// Account nonce ahead of the next expected one.
    NonceGap,
    InsufficientBalance,
    /// UTXO input already spent.
    DoubleSpend,
    UnknownInput,
    NotOwner,
    /// Outputs exceed inputs.
    Overspend,
    /// Structurally broken (empty UTXO lists, duplicate inputs, amount overflow).
    Malformed,
    /// Coinbase outside a block, at the wrong height, or with a bad shape.
    BadCoinbase,
}

impl TxInvalid {
    pub fn code(&self) -> &'static str {
        match self {
            TxInvalid::BadSignature => "bad_signature",
            TxInvalid::NonceReuse => "nonce_reuse",
            TxInvalid::NonceGap => "nonce_gap",
            TxInvalid::InsufficientBalance => "insufficient_balance",
            TxInvalid::DoubleSpend => "double_spend",
            TxInvalid::UnknownInput => "unknown_input",
            TxInvalid::NotOwner => "not_owner",
            TxInvalid::Overspend => "overspend",
            TxInvalid::Malformed => "malformed",
            TxInvalid::BadCoinbase => "bad_coinbase",
        }
    }
}

impl std::fmt::Display for TxInvalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Read access to ledger state.
pub trait StateView {
    fn balance(&self, id: &NodeId) -> u64;
    /// Next expected account nonce (0 for unseen senders).
    fn next_nonce(&self, id: &NodeId) -> u64;
    fn unspent(&self, op: &OutPoint) -> Option<TxOutput>;
    fn is_spent(&self, op: &OutPoint) -> bool;
}

/// Write primitives. Zero balances and zero nonces are stored as absent so
/// equal states compare equal regardless of history.
pub(crate) trait StateStore: StateView {
    fn set_balance(&mut self, id: NodeId, value: u64);
    fn set_nonce(&mut self, id: NodeId, value: u64);
    fn set_unspent(&mut self, op: OutPoint, out: Option<TxOutput>);
    fn set_spent(&mut self, op: OutPoint, spent: bool);
    fn issued(&self) -> u128;
    fn set_issued(&mut self, v: u128);
    fn burned(&self) -> u128;
    fn set_burned(&mut self, v: u128);
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TxIndex {
    balances: FxHashMap<NodeId, u64>,
    account_nonces: FxHashMap<NodeId, u64>,
    unspent: FxHashMap<OutPoint, TxOutput>,
    spent_outpoints: FxHashSet<OutPoint>,
    issued: u128,
    burned: u128,
}

impl TxIndex {
    pub fn from_genesis(genesis: &Block, alloc: &GenesisAlloc) -> Self {
        let mut index = TxIndex::default();
        for (owner, amount) in &alloc.accounts {
            let b = index.balance(owner);
            index.set_balance(*owner, b.saturating_add(*amount));
        }
        for (i, out) in alloc.utxos.iter().enumerate() {
            index.set_unspent(
                OutPoint {
                    tx_id: genesis.block_hash(),
                    index: i as u32,
                },
                Some(*out),
            );
        }
        index
    }

    /// Unspent outputs owned by `owner`, in outpoint order.
    pub fn outputs_of(&self, owner: &NodeId) -> Vec<(OutPoint, TxOutput)> {
        let mut out: Vec<(OutPoint, TxOutput)> = self
            .unspent
            .iter()
            .filter(|(_, o)| o.owner == *owner)
            .map(|(op, o)| (*op, *o))
            .collect();
        out.sort_unstable_by_key(|(op, _)| *op);
        out
    }

    /// Nonzero account balances in key order.
    pub fn balances(&self) -> Vec<(NodeId, u64)> {
        let mut out: Vec<(NodeId, u64)> = self.balances.iter().map(|(id, v)| (*id, *v)).collect();
        out.sort_unstable_by_key(|(id, _)| *id);
        out
    }

    /// Value held in accounts plus unspent outputs.
    pub fn total_value(&self) -> u128 {
        let acc: u128 = self.balances.values().map(|v| u128::from(*v)).sum();
        let utxo: u128 = self.unspent.values().map(|o| u128::from(o.amount)).sum();
        acc + utxo
    }

    /// Total coinbase issuance applied so far.
    pub fn issued_total(&self) -> u128 {
        self.issued
    }

    /// UTXO input value not carried to outputs (no fee market, so it is gone).
    pub fn burned_total(&self) -> u128 {
        self.burned
    }
}

impl StateView for TxIndex {
    fn balance(&self, id: &NodeId) -> u64 {
        self.balances.get(id).copied().unwrap_or(0)
    }

    fn next_nonce(&self, id: &NodeId) -> u64 {
        self.account_nonces.get(id).copied().unwrap_or(0)
    }

    fn unspent(&self, op: &OutPoint) -> Option<TxOutput> {
        self.unspent.get(op).copied()
    }

    fn is_spent(&self, op: &OutPoint) -> bool {
        self.spent_outpoints.contains(op)
    }
}

impl StateStore for TxIndex {
    fn set_balance(&mut self, id: NodeId, value: u64) {
        if value == 0 {
            self.balances.remove(&id);
        } else {
            self.balances.insert(id, value);
        }
    }

    fn set_nonce(&mut self, id: NodeId, value: u64) {
        if value == 0 {
            self.account_nonces.remove(&id);
        } else {
            self.account_nonces.insert(id, value);
        }
    }

    fn set_unspent(&mut self, op: OutPoint, out: Option<TxOutput>) {
        match out {
            Some(o) => self.unspent.insert(op, o),
            None => self.unspent.remove(&op),
        };
    }

    fn set_spent(&mut self, op: OutPoint, spent: bool) {
        if spent {
            self.spent_outpoints.insert(op);
        } else {
            self.spent_outpoints.remove(&op);
        }
    }

    fn issued(&self) -> u128 {
        self.issued
    }

    fn set_issued(&mut self, v: u128) {
        self.issued = v;
    }

    fn burned(&self) -> u128 {
        self.burned
    }

    fn set_burned(&mut self, v: u128) {
        self.burned = v;
    }
}

/// Copy-on-write view over a base index. Only touched keys are stored.
pub(crate) struct Overlay<'a> {
    base: &'a TxIndex,
    balances: FxHashMap<NodeId, u64>,
    nonces: FxHashMap<NodeId, u64>,
    unspent: FxHashMap<OutPoint, Option<TxOutput>>,
    spent: FxHashMap<OutPoint, bool>,
    issued: u128,
    burned: u128,
}

impl<'a> Overlay<'a> {
    pub(crate) fn new(base: &'a TxIndex) -> Self {
        Overlay {
            base,
            balances: FxHashMap::default(),
            nonces: FxHashMap::default(),
            unspent: FxHashMap::default(),
            spent: FxHashMap::default(),
            issued: base.issued,
            burned: base.burned,
        }
    }
}

impl StateView for Overlay<'_> {
    fn balance(&self, id: &NodeId) -> u64 {
        match self.balances.get(id) {
            Some(v) => *v,
            None => self.base.balance(id),
        }
    }

    fn next_nonce(&self, id: &NodeId) -> u64 {
        match self.nonces.get(id) {
            Some(v) => *v,
            None => self.base.next_nonce(id),
        }
    }

    fn unspent(&self, op: &OutPoint) -> Option<TxOutput> {
        match self.unspent.get(op) {
            Some(v) => *v,
            None => self.base.unspent(op),
        }
    }

    fn is_spent(&self, op: &OutPoint) -> bool {
        match self.spent.get(op) {
            Some(v) => *v,
            None => self.base.is_spent(op),
        }
    }
}

impl StateStore for Overlay<'_> {
    fn set_balance(&mut self, id: NodeId, value: u64) {
        self.balances.insert(id, value);
    }

    fn set_nonce(&mut self, id: NodeId, value: u64) {
        self.nonces.insert(id, value);
    }

    fn set_unspent(&mut self, op: OutPoint, out: Option<TxOutput>) {
        self.unspent.insert(op, out);
    }

    fn set_spent(&mut self, op: OutPoint, spent: bool) {
        self.spent.insert(op, spent);
    }

    fn issued(&self) -> u128 {
        self.issued
    }

    fn set_issued(&mut self, v: u128) {
        self.issued = v;
    }

    fn burned(&self) -> u128 {
        self.burned
    }

    fn set_burned(&mut self, v: u128) {
        self.burned = v;
    }
}

/// Prior value of one touched key.
#[derive(Clone, Debug)]
pub(crate) enum Undo {
    Balance(NodeId, u64),
    Nonce(NodeId, u64),
    Unspent(OutPoint, Option<TxOutput>),
    Spent(OutPoint, bool),
    Issued(u128),
    Burned(u128),
}

/// Undo entries for one block, in application order.
#[derive(Clone, Debug, Default)]
pub(crate) struct UndoLog(Vec<Undo>);

impl UndoLog {
    /// Restores every touched key to its value before the block.
    pub(crate) fn revert<S: StateStore>(&self, store: &mut S) {
        for entry in self.0.iter().rev() {
            match entry {
                Undo::Balance(id, v) => store.set_balance(*id, *v),
                Undo::Nonce(id, v) => store.set_nonce(*id, *v),
                Undo::Unspent(op, v) => store.set_unspent(*op, *v),
                Undo::Spent(op, v) => store.set_spent(*op, *v),
                Undo::Issued(v) => store.set_issued(*v),
                Undo::Burned(v) => store.set_burned(*v),
            }
        }
    }
}

/// Store wrapper recording the previous value of every write.
pub(crate) struct Journaled<'a, S: StateStore> {
    pub(crate) inner: &'a mut S,
    pub(crate) log: UndoLog,
}

impl<'a, S: StateStore> Journaled<'a, S> {
    #[cfg(test)]
    pub(crate) fn new(inner: &'a mut S) -> Self {
        Journaled {
            inner,
            log: UndoLog::default(),
        }
    }

    /// Journal sized for `block`: an account transfer writes three keys.
    pub(crate) fn for_block(inner: &'a mut S, block: &Block) -> Self {
        Journaled {
            inner,
            log: UndoLog(Vec::with_capacity(3 * block.transactions().len() + 2)),
        }
    }
}

impl<S: StateStore> StateView for Journaled<'_, S> {
    fn balance(&self, id: &NodeId) -> u64 {
        self.inner.balance(id)
    }

    fn next_nonce(&self, id: &NodeId) -> u64 {
        self.inner.next_nonce(id)
    }

    fn unspent(&self, op: &OutPoint) -> Option<TxOutput> {
        self.inner.unspent(op)
    }

    fn is_spent(&self, op: &OutPoint) -> bool {
        self.inner.is_spent(op)
    }
}

impl<S: StateStore> StateStore for Journaled<'_, S> {
    fn set_balance(&mut self, id: NodeId, value: u64) {
        self.log.0.push(Undo::Balance(id, self.inner.balance(&id)));
        self.inner.set_balance(id, value);
    }

    fn set_nonce(&mut self, id: NodeId, value: u64) {
        self.log.0.push(Undo::Nonce(id, self.inner.next_nonce(&id)));
        self.inner.set_nonce(id, value);
    }

    fn set_unspent(&mut self, op: OutPoint, out: Option<TxOutput>) {
        self.log.0.push(Undo::Unspent(op, self.inner.unspent(&op)));
        self.inner.set_unspent(op, out);
    }

    fn set_spent(&mut self, op: OutPoint, spent: bool) {
        self.log.0.push(Undo::Spent(op, self.inner.is_spent(&op)));
        self.inner.set_spent(op, spent);
    }

    fn issued(&self) -> u128 {
        self.inner.issued()
    }

    fn set_issued(&mut self, v: u128) {
        self.log.0.push(Undo::Issued(self.inner.issued()));
        self.inner.set_issued(v);
    }

    fn burned(&self) -> u128 {
        self.inner.burned()
    }

    fn set_burned(&mut self, v: u128) {
        self.log.0.push(Undo::Burned(self.inner.burned()));
        self.inner.set_burned(v);
    }
}

/// Checks `tx` against `view`. `block_height` is `None` for loose
/// (mempool) transactions, which may not be coinbase.
pub fn check_transaction<V: StateView + ?Sized>(
    view: &V,
    tx: &Transaction,
    block_height: Option<u64>,
    scheme: SigScheme,
) -> Result<(), TxInvalid> {
    match tx.body() {
        TxBody::Coinbase {
            height, outputs, ..
        } => {
            let at_height = block_height.is_some_and(|h| h == *height);
            if !at_height
                || outputs.is_empty()
                || *tx.sender() != NodeId::system()
                || *tx.signature() != crate::crypto::Signature::Empty
            {
                return Err(TxInvalid::BadCoinbase);
            }
            if outputs
                .iter()
                .try_fold(0u64, |acc, o| acc.checked_add(o.amount))
                .is_none()
            {
                return Err(TxInvalid::Malformed);
            }
            Ok(())
        }
        TxBody::Account { amount, nonce, .. } => {
            if !tx.verify_signature(scheme) {
                return Err(TxInvalid::BadSignature);
            }
            let expected = view.next_nonce(tx.sender());
            if *nonce < expected {
                return Err(TxInvalid::NonceReuse);
            }
            if *nonce > expected {
                return Err(TxInvalid::NonceGap);
            }
            if view.balance(tx.sender()) < *amount {
                return Err(TxInvalid::InsufficientBalance);
            }
            Ok(())
        }
        TxBody::Utxo { inputs, outputs } => {
            if inputs.is_empty() || outputs.is_empty() {
                return Err(TxInvalid::Malformed);
            }
            let distinct: FxHashSet<&OutPoint> = inputs.iter().collect();
            if distinct.len() != inputs.len() {
                return Err(TxInvalid::Malformed);
            }
            let out_sum = outputs
                .iter()
                .try_fold(0u64, |acc, o| acc.checked_add(o.amount))
                .ok_or(TxInvalid::Malformed)?;
            if !tx.verify_signature(scheme) {
                return Err(TxInvalid::BadSignature);
            }
            let mut in_sum: u128 = 0;
            for op in inputs {
                if view.is_spent(op) {
                    return Err(TxInvalid::DoubleSpend);
                }
                let prev = view.unspent(op).ok_or(TxInvalid::UnknownInput)?;
                if prev.owner != *tx.sender() {
                    return Err(TxInvalid::NotOwner);
                }
                in_sum += u128::from(prev.amount);
            }
            if u128::from(out_sum) > in_sum {
                return Err(TxInvalid::Overspend);
            }
            Ok(())
        }
    }
}

fn credit<S: StateStore>(store: &mut S, id: NodeId, amount: u64) {
    let b = store.balance(&id);
    store.set_balance(id, b.saturating_add(amount));
}

/// Applies an already-checked transaction.
pub(crate) fn execute_transaction<S: StateStore>(store: &mut S, tx: &Transaction) {
    let tx_id = tx.tx_id();
    let add_outputs = |store: &mut S, outputs: &[TxOutput]| {
        for (i, out) in outputs.iter().enumerate() {
            store.set_unspent(
                OutPoint {
                    tx_id,
                    index: i as u32,
                },
                Some(*out),
            );
        }
    };
    match tx.body() {
        TxBody::Account {
            recipient,
            amount,
            nonce,
        } => {
            let sender = *tx.sender();
            let b = store.balance(&sender);
            store.set_balance(sender, b - amount);
            credit(store, *recipient, *amount);
            store.set_nonce(sender, nonce + 1);
        }
        TxBody::Utxo { inputs, outputs } => {
            let mut in_sum: u128 = 0;
            for op in inputs {
                if let Some(prev) = store.unspent(op) {
                    in_sum += u128::from(prev.amount);
                }
                store.set_unspent(*op, None);
                store.set_spent(*op, true);
            }
            let out_sum: u128 = outputs.iter().map(|o| u128::from(o.amount)).sum();
            let burned = store.burned();
            store.set_burned(burned + in_sum.saturating_sub(out_sum));
            add_outputs(store, outputs);
        }
        TxBody::Coinbase { model, outputs, .. } => {
            match model {
                TxModel::Account => {
                    for out in outputs {
                        credit(store, out.owner, out.amount);
                    }
                }
                TxModel::Utxo => add_outputs(store, outputs),
            }
            let issued = store.issued();
            store.set_issued(issued + tx.output_value());
        }
    }
}

/// Checks and applies every transaction of `block` in order. On failure
/// returns the offending index; `store` is then partially updated and the
/// caller must discard it.
pub(crate) fn execute_block<S: StateStore>(
    store: &mut S,
    block: &Block,
    scheme: SigScheme,
) -> Result<(), (usize, TxInvalid)> {
    for (i, tx) in block.transactions().iter().enumerate() {
        check_transaction(&*store, tx, Some(block.height()), scheme).map_err(|e| (i, e))?;
        execute_transaction(store, tx);
    }
    Ok(())
}
