use std::collections::VecDeque;
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use super::index::{execute_block, Journaled, Overlay, StateView, TxIndex, TxInvalid, UndoLog};
use crate::scoring::{block_score, priority_key, BlockScore};
use crate::types::{Block, BlockHash, ChainConfig, GenesisAlloc, NodeId, U256};
use crate::witness::{is_eligible_witness, witness_message};

/// Why a witness certificate is unacceptable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessFault {
    TooFew,
    Duplicate,
    SelfWitness,
    Ineligible,
    BadSignature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    Duplicate,
    /// Wrong height for its parent, a second genesis, or duplicate tx ids.
    Malformed,
    TooFewTxs,
    BadWitness {
        fault: WitnessFault,
    },
    InvalidTx {
        index: usize,
        cause: TxInvalid,
    },
    UnknownParentAfterTimeout,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::Duplicate => "duplicate",
            RejectReason::Malformed => "malformed",
            RejectReason::TooFewTxs => "too_few_txs",
            RejectReason::BadWitness { .. } => "bad_witness",
            RejectReason::InvalidTx { .. } => "invalid_tx",
            RejectReason::UnknownParentAfterTimeout => "unknown_parent_after_timeout",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::BadWitness { fault } => write!(f, "bad_witness ({fault:?})"),
            RejectReason::InvalidTx { index, cause } => write!(f, "invalid_tx (#{index}: {cause})"),
            other => f.write_str(other.code()),
        }
    }
}

/// Announcement that the sender switched to the branch starting at
/// `branch_first_block` and ending at `branch_head`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ForkWinMsg {
    pub branch_first_block: BlockHash,
    pub branch_head: BlockHash,
    pub sender: NodeId,
}

/// A head change that abandoned at least one main-chain block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ForkSwitch {
    pub fork_point: BlockHash,
    pub old_head: BlockHash,
    pub new_head: BlockHash,
    /// Former main-chain blocks, ascending height.
    pub reverted: Vec<BlockHash>,
    /// New main-chain blocks, ascending height.
    pub adopted: Vec<BlockHash>,
    /// Whether any reverted block had been confirmed before the switch.
    pub reverted_confirmed: bool,
}

impl ForkSwitch {
    pub fn fork_win(&self, sender: NodeId) -> ForkWinMsg {
        ForkWinMsg {
            branch_first_block: self.adopted[0],
            branch_head: self.new_head,
            sender,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApplyOutcome {
    /// Head moved forward; `adopted` are the new main-chain blocks.
    Extended {
        adopted: Vec<BlockHash>,
    },
    /// Stored off the main chain; head unchanged.
    SideBranch,
    Switched(ForkSwitch),
    /// Parent unknown; held in the orphan pool.
    Buffered,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForkDecision {
    KeepCurrent,
    Extend(Vec<BlockHash>),
    Switch(ForkSwitch),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForkWinOutcome {
    /// Already following the announced branch.
    NoOp,
    Switched(ForkSwitch),
    /// The announced branch loses under the fork rule.
    KeptCurrent,
    /// Blocks that must be fetched before the message can be evaluated.
    Missing(Vec<BlockHash>),
    Invalid(RejectReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrphanPolicy {
    pub capacity: usize,
    /// Orphans older than this many `apply_block` calls are dropped.
    pub timeout_events: u64,
}

impl Default for OrphanPolicy {
    fn default() -> Self {
        OrphanPolicy {
            capacity: 256,
            timeout_events: 10_000,
        }
    }
}

struct Entry {
    block: Arc<Block>,
    score: BlockScore,
    children: Vec<BlockHash>,
    /// Greatest height in this block's subtree.
    tip_height: u64,
}

#[derive(Default)]
struct OrphanPool {
    by_parent: FxHashMap<BlockHash, Vec<BlockHash>>,
    blocks: FxHashMap<BlockHash, (Arc<Block>, u64)>,
    order: VecDeque<BlockHash>,
}

impl OrphanPool {
    fn remove(&mut self, hash: &BlockHash) -> Option<Arc<Block>> {
        let (block, _) = self.blocks.remove(hash)?;
        if let Some(siblings) = self.by_parent.get_mut(&block.parent_hash()) {
            siblings.retain(|h| h != hash);
            if siblings.is_empty() {
                self.by_parent.remove(&block.parent_hash());
            }
        }
        Some(block)
    }
}

/// One node's view of the chain.
///
/// Holds every valid block it has seen as a tree, follows one branch of it
/// (the main chain), and keeps the transaction index of the main-chain head
/// up to date incrementally. Side branches are validated against an overlay
/// of the main index unwound to their fork point, so the main index is only
/// written when the head moves.
pub struct ChainState {
    config: ChainConfig,
    alloc: GenesisAlloc,
    entries: FxHashMap<BlockHash, Entry>,
    by_height: FxHashMap<u64, Vec<BlockHash>>,
    main_chain: Vec<BlockHash>,
    index: TxIndex,
    undo: FxHashMap<BlockHash, UndoLog>,
    orphans: OrphanPool,
    orphan_policy: OrphanPolicy,
    events: u64,
    rejections: Vec<(BlockHash, RejectReason)>,
}

impl ChainState {
    pub fn new(config: ChainConfig, alloc: GenesisAlloc) -> Self {
        ChainState::with_orphan_policy(config, alloc, OrphanPolicy::default())
    }

    pub fn with_orphan_policy(
        config: ChainConfig,
        alloc: GenesisAlloc,
        policy: OrphanPolicy,
    ) -> Self {
        let genesis = Arc::new(Block::genesis(&config, &alloc));
        let hash = genesis.block_hash();
        let index = TxIndex::from_genesis(&genesis, &alloc);
        let mut entries = FxHashMap::default();
        entries.insert(
            hash,
            Entry {
                block: genesis,
                score: BlockScore(U256::ZERO),
                children: Vec::new(),
                tip_height: 0,
            },
        );
        ChainState {
            config,
            alloc,
            entries,
            by_height: FxHashMap::from_iter([(0, vec![hash])]),
            main_chain: vec![hash],
            index,
            undo: FxHashMap::default(),
            orphans: OrphanPool::default(),
            orphan_policy: policy,
            events: 0,
            rejections: Vec::new(),
        }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn genesis_alloc(&self) -> &GenesisAlloc {
        &self.alloc
    }

    pub fn genesis_hash(&self) -> BlockHash {
        self.main_chain[0]
    }

    pub fn main_head(&self) -> BlockHash {
        *self.main_chain.last().expect("genesis always present")
    }

    pub fn head_height(&self) -> u64 {
        (self.main_chain.len() - 1) as u64
    }

    pub fn head_block(&self) -> &Arc<Block> {
        &self.entries[&self.main_head()].block
    }

    /// Main-chain block hashes, index = height.
    pub fn main_chain(&self) -> &[BlockHash] {
        &self.main_chain
    }

    pub fn main_chain_blocks(&self) -> impl Iterator<Item = &Arc<Block>> {
        self.main_chain.iter().map(|h| &self.entries[h].block)
    }

    pub fn is_on_main_chain(&self, hash: &BlockHash) -> bool {
        self.entries
            .get(hash)
            .is_some_and(|e| self.main_chain.get(e.block.height() as usize) == Some(hash))
    }

    pub fn contains(&self, hash: &BlockHash) -> bool {
        self.entries.contains_key(hash)
    }

    pub fn is_orphan(&self, hash: &BlockHash) -> bool {
        self.orphans.blocks.contains_key(hash)
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.blocks.len()
    }

    pub fn block(&self, hash: &BlockHash) -> Option<&Arc<Block>> {
        self.entries.get(hash).map(|e| &e.block)
    }

    pub fn score_of(&self, hash: &BlockHash) -> Option<BlockScore> {
        self.entries.get(hash).map(|e| e.score)
    }

    pub fn blocks_at_height(&self, height: u64) -> impl Iterator<Item = &Arc<Block>> {
        self.by_height
            .get(&height)
            .into_iter()
            .flatten()
            .map(|h| &self.entries[h].block)
    }

    /// The main-chain head's transaction index.
    pub fn index(&self) -> &TxIndex {
        &self.index
    }

    pub fn known_blocks(&self) -> usize {
        self.entries.len()
    }

    /// Orphans dropped or failed since the last call.
    pub fn drain_rejections(&mut self) -> Vec<(BlockHash, RejectReason)> {
        std::mem::take(&mut self.rejections)
    }

    /// Highest confirmed height: the head must be at least `confirm_depth`
    /// blocks above it. Genesis is always confirmed.
    pub fn confirmed_height(&self) -> u64 {
        self.head_height()
            .saturating_sub(u64::from(self.config.confirm_depth))
    }

    /// Main-chain blocks at depth `>= confirm_depth` below the head, in
    /// height order.
    pub fn confirmed_prefix(&self) -> &[BlockHash] {
        &self.main_chain[..=self.confirmed_height() as usize]
    }

    /// Path of block hashes from `ancestor` (exclusive) down to `hash`
    /// (inclusive), or `None` if `ancestor` is not an ancestor.
    pub fn path_from(&self, ancestor: &BlockHash, hash: &BlockHash) -> Option<Vec<BlockHash>> {
        let stop = self.entries.get(ancestor)?.block.height();
        let mut path = Vec::new();
        let mut cur = *hash;
        loop {
            let e = self.entries.get(&cur)?;
            if e.block.height() == stop {
                if cur != *ancestor {
                    return None;
                }
                path.reverse();
                return Some(path);
            }
            if e.block.height() < stop {
                return None;
            }
            path.push(cur);
            cur = e.block.parent_hash();
        }
    }

    /// Lowest main-chain ancestor of a known block.
    fn main_ancestor(&self, hash: &BlockHash) -> BlockHash {
        let mut cur = *hash;
        while !self.is_on_main_chain(&cur) {
            cur = self.entries[&cur].block.parent_hash();
        }
        cur
    }

    /// Ledger state as of the known block `hash`, as an overlay on the main
    /// index: main blocks above the fork point are unwound with their undo
    /// logs, then the side path is re-executed.
    pub(crate) fn overlay_at(&self, hash: &BlockHash) -> Overlay<'_> {
        let fork = self.main_ancestor(hash);
        let fork_height = self.entries[&fork].block.height() as usize;
        let mut ov = Overlay::new(&self.index);
        for h in self.main_chain[fork_height + 1..].iter().rev() {
            self.undo[h].revert(&mut ov);
        }
        let side = self.path_from(&fork, hash).expect("fork is an ancestor");
        for h in side {
            execute_block(&mut ov, &self.entries[&h].block, self.config.sig_scheme)
                .expect("stored blocks are valid");
        }
        ov
    }

    /// Read-only view of the ledger state after `hash`.
    pub fn state_at(&self, hash: &BlockHash) -> Option<impl StateView + '_> {
        self.entries
            .contains_key(hash)
            .then(|| self.overlay_at(hash))
    }

    fn check_witnesses(&self, block: &Block) -> Result<(), WitnessFault> {
        let sigs = block.witness_sigs();
        if sigs.len() < self.config.witness_m as usize {
            return Err(WitnessFault::TooFew);
        }
        let mut seen = FxHashSet::with_capacity_and_hasher(sigs.len(), Default::default());
        let msg = witness_message(&block.witness_digest());
        for ws in sigs {
            if ws.witness == *block.proposer() {
                return Err(WitnessFault::SelfWitness);
            }
            if !seen.insert(ws.witness) {
                return Err(WitnessFault::Duplicate);
            }
            if !is_eligible_witness(block.proposer(), &ws.witness, &self.config).unwrap_or(false) {
                return Err(WitnessFault::Ineligible);
            }
            if !self
                .config
                .sig_scheme
                .verify(&ws.witness, &msg, &ws.signature)
            {
                return Err(WitnessFault::BadSignature);
            }
        }
        Ok(())
    }

    /// Height, transaction count and tx id uniqueness.
    fn check_structure(&self, block: &Block, parent_height: u64) -> Result<(), RejectReason> {
        if block.height() != parent_height + 1 {
            return Err(RejectReason::Malformed);
        }
        if block.user_tx_count() < self.config.tx_count_min as usize {
            return Err(RejectReason::TooFewTxs);
        }
        let mut ids =
            FxHashSet::with_capacity_and_hasher(block.transactions().len(), Default::default());
        if !block.transactions().iter().all(|t| ids.insert(t.tx_id())) {
            return Err(RejectReason::Malformed);
        }
        Ok(())
    }

    /// Structural and witness checks that need only the parent's height.
    pub fn check_block_shape(&self, block: &Block, parent_height: u64) -> Result<(), RejectReason> {
        self.check_structure(block, parent_height)?;
        self.check_witnesses(block)
            .map_err(|fault| RejectReason::BadWitness { fault })
    }

    /// Everything except witnesses: what a witness checks before signing.
    pub fn validate_proposal(&self, block: &Block) -> Result<(), RejectReason> {
        let parent = self
            .entries
            .get(&block.parent_hash())
            .ok_or(RejectReason::UnknownParentAfterTimeout)?;
        self.check_structure(block, parent.block.height())?;
        self.validate_transactions(block)
    }

    /// Full validation of a block whose parent is known: structure, then
    /// witnesses, then every transaction against the parent's state.
    pub fn validate_block(&self, block: &Block) -> Result<(), RejectReason> {
        if self.entries.contains_key(&block.block_hash()) {
            return Err(RejectReason::Duplicate);
        }
        let parent = self
            .entries
            .get(&block.parent_hash())
            .ok_or(RejectReason::UnknownParentAfterTimeout)?;
        self.check_block_shape(block, parent.block.height())?;
        self.validate_transactions(block)
    }

    /// Transaction checks only, against the parent's state.
    pub fn validate_transactions(&self, block: &Block) -> Result<(), RejectReason> {
        let mut ov = self.overlay_at(&block.parent_hash());
        execute_block(&mut ov, block, self.config.sig_scheme)
            .map_err(|(index, cause)| RejectReason::InvalidTx { index, cause })
    }

    fn expire_orphans(&mut self) {
        while let Some(front) = self.orphans.order.front().copied() {
            match self.orphans.blocks.get(&front) {
                None => {
                    self.orphans.order.pop_front();
                }
                Some((_, at))
                    if self.events.saturating_sub(*at) > self.orphan_policy.timeout_events =>
                {
                    self.orphans.order.pop_front();
                    self.orphans.remove(&front);
                    self.rejections
                        .push((front, RejectReason::UnknownParentAfterTimeout));
                }
                Some(_) => break,
            }
        }
    }

    fn buffer_orphan(&mut self, block: Arc<Block>) {
        let hash = block.block_hash();
        if self.orphans.blocks.contains_key(&hash) {
            return;
        }
        while self.orphans.blocks.len() >= self.orphan_policy.capacity {
            let Some(oldest) = self.orphans.order.pop_front() else {
                break;
            };
            self.orphans.remove(&oldest);
        }
        self.orphans
            .by_parent
            .entry(block.parent_hash())
            .or_default()
            .push(hash);
        self.orphans.blocks.insert(hash, (block, self.events));
        self.orphans.order.push_back(hash);
    }

    fn insert_entry(&mut self, block: Arc<Block>) {
        let hash = block.block_hash();
        let height = block.height();
        let parent = block.parent_hash();
        let score = block_score(&block).expect("validated blocks have transactions");
        self.entries.insert(
            hash,
            Entry {
                block,
                score,
                children: Vec::new(),
                tip_height: height,
            },
        );
        self.by_height.entry(height).or_default().push(hash);
        self.entries
            .get_mut(&parent)
            .expect("parent known")
            .children
            .push(hash);
        let mut cur = parent;
        loop {
            let e = self.entries.get_mut(&cur).expect("ancestor known");
            if e.tip_height >= height {
                break;
            }
            e.tip_height = height;
            if e.block.is_genesis() {
                break;
            }
            cur = e.block.parent_hash();
        }
    }

    /// Fork-rule ranking of a child branch; greater wins. A branch of
    /// `n_l >= n_c` blocks outranks every shorter branch and longer such
    /// branches win; otherwise (and among equal lengths) the lower
    /// first-block score wins, ties broken by lower hash.
    fn branch_rank(&self, child: &BlockHash) -> (u64, std::cmp::Reverse<(BlockScore, U256)>) {
        let e = &self.entries[child];
        let len = e.tip_height - e.block.height() + 1;
        let capped = if len >= u64::from(self.config.confirm_depth) {
            len
        } else {
            0
        };
        (capped, std::cmp::Reverse(priority_key(e.score, &e.block)))
    }

    /// Leaf reached by repeatedly following the winning child from `from`.
    fn choose_head_from(&self, from: &BlockHash) -> BlockHash {
        let mut cur = *from;
        loop {
            let children = &self.entries[&cur].children;
            match children.iter().max_by_key(|c| self.branch_rank(c)) {
                Some(best) => cur = *best,
                None => return cur,
            }
        }
    }

    fn set_head(&mut self, new_head: BlockHash) -> ForkDecision {
        let old_head = self.main_head();
        if new_head == old_head {
            return ForkDecision::KeepCurrent;
        }
        let old_confirmed = self.confirmed_height();
        let fork = self.main_ancestor(&new_head);
        let fork_height = self.entries[&fork].block.height() as usize;
        let reverted: Vec<BlockHash> = self.main_chain[fork_height + 1..].to_vec();
        for h in reverted.iter().rev() {
            let log = self.undo.remove(h).expect("main blocks have undo logs");
            log.revert(&mut self.index);
        }
        self.main_chain.truncate(fork_height + 1);
        let adopted = self
            .path_from(&fork, &new_head)
            .expect("fork is an ancestor");
        for h in &adopted {
            let block = Arc::clone(&self.entries[h].block);
            let mut j = Journaled::for_block(&mut self.index, &block);
            execute_block(&mut j, &block, self.config.sig_scheme).expect("stored blocks are valid");
            let log = j.log;
            self.undo.insert(*h, log);
            self.main_chain.push(*h);
        }
        if reverted.is_empty() {
            ForkDecision::Extend(adopted)
        } else {
            ForkDecision::Switch(ForkSwitch {
                fork_point: fork,
                old_head,
                new_head,
                reverted_confirmed: fork_height < old_confirmed as usize,
                reverted,
                adopted,
            })
        }
    }

    /// Re-evaluates the fork rule below `fork_point` (a main-chain block)
    /// and moves the head if a different branch wins.
    pub fn resolve_fork(&mut self, fork_point: &BlockHash) -> ForkDecision {
        let start = if self.is_on_main_chain(fork_point) {
            *fork_point
        } else {
            self.genesis_hash()
        };
        let winner = self.choose_head_from(&start);
        self.set_head(winner)
    }

    /// Validates and stores a block, runs fork resolution, and connects any
    /// buffered orphans that were waiting on it.
    pub fn apply_block(
        &mut self,
        block: impl Into<Arc<Block>>,
    ) -> Result<ApplyOutcome, RejectReason> {
        let block: Arc<Block> = block.into();
        self.events += 1;
        self.expire_orphans();
        let hash = block.block_hash();
        if self.entries.contains_key(&hash) {
            return Err(RejectReason::Duplicate);
        }
        if block.height() == 0 {
            return Err(RejectReason::Malformed);
        }
        if !self.entries.contains_key(&block.parent_hash()) {
            self.buffer_orphan(block);
            return Ok(ApplyOutcome::Buffered);
        }
        let old_head = self.main_head();
        let block_parent = block.parent_hash();
        let extends_head = block_parent == old_head;
        if extends_head {
            self.extend_head(block)?;
        } else {
            self.validate_block(&block)?;
            self.insert_entry(block);
        }
        let mut touched = vec![block_parent];
        let mut ready = VecDeque::from([hash]);
        while let Some(parent) = ready.pop_front() {
            let Some(waiting) = self.orphans.by_parent.get(&parent).cloned() else {
                continue;
            };
            for child in waiting {
                let Some(orphan) = self.orphans.remove(&child) else {
                    continue;
                };
                match self.validate_block(&orphan) {
                    Ok(()) => {
                        self.insert_entry(orphan);
                        ready.push_back(child);
                    }
                    Err(reason) => self.rejections.push((child, reason)),
                }
            }
            touched.push(parent);
        }
        if extends_head && touched.len() == 1 {
            return Ok(ApplyOutcome::Extended {
                adopted: vec![hash],
            });
        }

        // All new blocks hang below `block.parent`; deciding from its lowest
        // main-chain ancestor covers every changed branch.
        let fork_point = self.main_ancestor(&touched[0]);
        match (self.resolve_fork(&fork_point), extends_head) {
            (ForkDecision::KeepCurrent, false) => Ok(ApplyOutcome::SideBranch),
            (ForkDecision::KeepCurrent, true) => Ok(ApplyOutcome::Extended {
                adopted: vec![hash],
            }),
            (ForkDecision::Extend(mut adopted), _) => {
                if extends_head {
                    adopted.insert(0, hash);
                }
                debug_assert_eq!(self.entries[&adopted[0]].block.parent_hash(), old_head);
                Ok(ApplyOutcome::Extended { adopted })
            }
            (ForkDecision::Switch(s), _) => Ok(ApplyOutcome::Switched(s)),
        }
    }

    /// Validates a child of the main head by executing it directly on the
    /// main index, unwinding on failure, and makes it the new head. A child
    /// of the head always wins the fork rule: it is the head's only child
    /// and it lengthens every main-chain branch above it.
    fn extend_head(&mut self, block: Arc<Block>) -> Result<(), RejectReason> {
        self.check_block_shape(&block, self.head_height())?;
        let (result, log) = {
            let mut j = Journaled::for_block(&mut self.index, &block);
            let result = execute_block(&mut j, &block, self.config.sig_scheme);
            (result, j.log)
        };
        if let Err((index, cause)) = result {
            log.revert(&mut self.index);
            return Err(RejectReason::InvalidTx { index, cause });
        }
        let hash = block.block_hash();
        self.undo.insert(hash, log);
        self.insert_entry(block);
        self.main_chain.push(hash);
        Ok(())
    }

    /// Validates a chain of blocks hanging off a known block without
    /// storing anything. `blocks` must be parent-before-child.
    fn validate_branch(&self, blocks: &[Arc<Block>]) -> Result<(), RejectReason> {
        let Some(first) = blocks.first() else {
            return Ok(());
        };
        let base = first.parent_hash();
        let parent = self
            .entries
            .get(&base)
            .ok_or(RejectReason::UnknownParentAfterTimeout)?;
        let mut ov = self.overlay_at(&base);
        let mut prev_hash = base;
        let mut prev_height = parent.block.height();
        for b in blocks {
            if b.parent_hash() != prev_hash {
                return Err(RejectReason::Malformed);
            }
            self.check_block_shape(b, prev_height)?;
            execute_block(&mut ov, b, self.config.sig_scheme)
                .map_err(|(index, cause)| RejectReason::InvalidTx { index, cause })?;
            prev_hash = b.block_hash();
            prev_height = b.height();
        }
        Ok(())
    }

    /// Processes a fork-win announcement together with whatever branch
    /// blocks accompany it. Blocks already known are skipped; an invalid
    /// branch leaves the state untouched.
    pub fn handle_fork_win(&mut self, msg: &ForkWinMsg, blocks: &[Arc<Block>]) -> ForkWinOutcome {
        if self.is_on_main_chain(&msg.branch_head) {
            return ForkWinOutcome::NoOp;
        }
        let mut fresh: Vec<Arc<Block>> = blocks
            .iter()
            .filter(|b| !self.entries.contains_key(&b.block_hash()))
            .cloned()
            .collect();
        fresh.sort_by_key(|b| b.height());
        if !fresh.is_empty() {
            if let Err(reason) = self.validate_branch(&fresh) {
                return match reason {
                    RejectReason::UnknownParentAfterTimeout => {
                        ForkWinOutcome::Missing(vec![fresh[0].parent_hash()])
                    }
                    other => ForkWinOutcome::Invalid(other),
                };
            }
        }
        let mut switch = None;
        for b in fresh {
            match self.apply_block(b) {
                Ok(ApplyOutcome::Switched(s)) => switch = Some(s),
                Ok(_) => {}
                Err(reason) => return ForkWinOutcome::Invalid(reason),
            }
        }
        if !self.entries.contains_key(&msg.branch_head) {
            return ForkWinOutcome::Missing(vec![msg.branch_head]);
        }
        if self.is_on_main_chain(&msg.branch_head) {
            return match switch {
                Some(s) => ForkWinOutcome::Switched(s),
                None => ForkWinOutcome::NoOp,
            };
        }
        ForkWinOutcome::KeptCurrent
    }

    /// Recomputes the main-chain transaction index from genesis by full
    /// replay. Used as an oracle against the incremental index.
    pub fn replay_main_chain(&self) -> TxIndex {
        let genesis = &self.entries[&self.main_chain[0]].block;
        let mut index = TxIndex::from_genesis(genesis, &self.alloc);
        for h in &self.main_chain[1..] {
            execute_block(&mut index, &self.entries[h].block, self.config.sig_scheme)
                .expect("main chain replays cleanly");
        }
        index
    }

    pub fn replay_matches(&self) -> bool {
        self.replay_main_chain() == self.index
    }

    /// `value in accounts and UTXOs + burned == genesis issuance + coinbase`.
    pub fn conservation_holds(&self) -> bool {
        self.index.total_value() + self.index.burned_total()
            == self.alloc.total() + self.index.issued_total()
    }
}

impl std::fmt::Debug for ChainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChainState")
            .field("head", &self.main_head())
            .field("height", &self.head_height())
            .field("known_blocks", &self.entries.len())
            .field("orphans", &self.orphans.blocks.len())
            .finish()
    }
}
