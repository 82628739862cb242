use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};

use super::config::{AdversaryStrategy, SimConfig};
use super::queue::EventQueue;
use super::report::{NodeHead, SimReport};
use super::SimError;
use crate::crypto::Keypair;
use crate::incentive::MintHooks;
use crate::ledger::{
    check_transaction, ChainState, ForkWinMsg, ForkWinOutcome, RejectReason, StateView, TxInvalid,
};
use crate::types::{
    Block, BlockHash, GenesisAlloc, NodeId, OutPoint, Transaction, TxBody, TxId, TxModel, TxOutput,
    WitnessSignature,
};
use crate::witness::{
    mint_block, propose_block, sign_witness, witness_message, WitnessBook, WitnessRequest,
};

/// Initial balance of every account and every genesis UTXO.
pub const SIM_FUNDING: u64 = 1_000_000_000;

const PULL_LIMIT: usize = 512;

#[derive(Clone)]
enum Msg {
    Tx(Arc<Transaction>),
    WitnessRequest(Arc<WitnessRequest>),
    WitnessSig {
        digest: BlockHash,
        sig: WitnessSignature,
    },
    Block(Arc<Block>),
    ForkWin {
        msg: ForkWinMsg,
        blocks: Arc<Vec<Arc<Block>>>,
    },
    Status {
        head: BlockHash,
    },
    Pull {
        want: BlockHash,
        locator: Arc<Vec<BlockHash>>,
    },
    Blocks(Arc<Vec<Arc<Block>>>),
}

impl Msg {
    fn label(&self) -> &'static str {
        match self {
            Msg::Tx(_) => "tx",
            Msg::WitnessRequest(_) => "witness_request",
            Msg::WitnessSig { .. } => "witness_sig",
            Msg::Block(_) => "block",
            Msg::ForkWin { .. } => "fork_win",
            Msg::Status { .. } => "status",
            Msg::Pull { .. } => "pull",
            Msg::Blocks(_) => "blocks",
        }
    }

    fn subject(&self) -> BlockHash {
        match self {
            Msg::Tx(t) => t.tx_id(),
            Msg::WitnessRequest(r) => r.digest,
            Msg::WitnessSig { digest, .. } => *digest,
            Msg::Block(b) => b.block_hash(),
            Msg::ForkWin { msg, .. } => msg.branch_head,
            Msg::Status { head } => *head,
            Msg::Pull { want, .. } => *want,
            Msg::Blocks(bs) => bs.last().map(|b| b.block_hash()).unwrap_or_default(),
        }
    }
}

enum Event {
    Deliver { to: usize, from: usize, msg: Msg },
    InjectTx,
    ProposeTick,
    StatusTick,
}

/// Outgoing transmission requested by a handler.
enum Out {
    To(usize, usize, Msg),
    /// To every other node, `copies` independent transmissions each.
    All(usize, Msg, u32),
    /// To honest nodes whose position in the honest list has this parity.
    HonestHalf(usize, Msg, usize),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum SpendKey {
    Nonce(NodeId, u64),
    Coin(OutPoint),
}

enum Wallet {
    Account { next_nonce: u64 },
    Utxo { coins: VecDeque<(OutPoint, u64)> },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    All,
    Half(usize),
}

struct Pending {
    request: Arc<WitnessRequest>,
    sigs: Vec<WitnessSignature>,
    started: u64,
    invalid: bool,
    target: Target,
}

struct Node {
    key: Keypair,
    id: NodeId,
    adversary: bool,
    chain: ChainState,
    mempool: IndexMap<TxId, Arc<Transaction>>,
    book: WitnessBook,
    pending: Vec<Pending>,
    wallet: Wallet,
    ever_confirmed: Vec<Vec<BlockHash>>,
    recorded_upto: u64,
    spends: FxHashMap<SpendKey, TxId>,
    conflicted: bool,
}

struct Shared {
    cfg: SimConfig,
    ids: Vec<NodeId>,
    honest: Vec<usize>,
    eligible: Vec<Vec<usize>>,
    hooks: MintHooks,
}

#[derive(Default)]
struct Stats {
    invalid_minted: u64,
    blocks_minted: u64,
    double_spend_pairs: u64,
    fork_win_msgs: u64,
    fork_switches: u64,
    confirmed_reverts: u64,
    replay_checks: u64,
    replay_mismatches: u64,
    conservation_violations: u64,
    invalid_rejected: u64,
    invalid_accepted: u64,
    proposals: u64,
    witness_refusals: BTreeMap<String, u64>,
    messages_sent: u64,
    messages_delivered: u64,
    events_processed: u64,
    invalid_hashes: FxHashSet<BlockHash>,
}

fn spend_keys(tx: &Transaction) -> Vec<SpendKey> {
    match tx.body() {
        TxBody::Account { nonce, .. } => vec![SpendKey::Nonce(*tx.sender(), *nonce)],
        TxBody::Utxo { inputs, .. } => inputs.iter().map(|op| SpendKey::Coin(*op)).collect(),
        TxBody::Coinbase { .. } => Vec::new(),
    }
}

/// Main-chain hashes a requester already holds: the last few heights, then
/// exponentially sparser back to genesis.
fn locator(chain: &ChainState) -> Arc<Vec<BlockHash>> {
    let main = chain.main_chain();
    let mut out = Vec::new();
    let mut h = main.len() - 1;
    let mut step = 1;
    loop {
        out.push(main[h]);
        if h == 0 {
            break;
        }
        if out.len() >= 12 {
            step *= 2;
        }
        h = h.saturating_sub(step);
    }
    Arc::new(out)
}

impl Node {
    fn head_state_keeps(&self, tx: &Transaction) -> bool {
        match check_transaction(self.chain.index(), tx, None, self.chain.config().sig_scheme) {
            Ok(()) => true,
            Err(TxInvalid::NonceGap | TxInvalid::InsufficientBalance | TxInvalid::UnknownInput) => {
                true
            }
            Err(_) => false,
        }
    }

    fn add_to_mempool(&mut self, tx: Arc<Transaction>, capacity: usize) {
        if tx.is_coinbase() || self.mempool.contains_key(&tx.tx_id()) {
            return;
        }
        self.mempool.insert(tx.tx_id(), tx);
        while self.mempool.len() > capacity {
            self.mempool.shift_remove_index(0);
        }
    }

    fn prune_mempool(&mut self) {
        let keep: Vec<bool> = self
            .mempool
            .values()
            .map(|t| self.head_state_keeps(t))
            .collect();
        let mut it = keep.into_iter();
        self.mempool.retain(|_, _| it.next().unwrap_or(true));
    }

    /// Records newly confirmed blocks and checks the confirmed prefix for
    /// conflicting spends. `fork_height` is set when blocks above it were
    /// abandoned.
    fn track_confirmation(&mut self, fork_height: Option<u64>) {
        let c = self.chain.confirmed_height();
        let mut start = self.recorded_upto + 1;
        if let Some(f) = fork_height {
            if f < self.recorded_upto {
                self.spends.clear();
                start = 1;
            }
        }
        if self.ever_confirmed.len() <= c as usize {
            self.ever_confirmed.resize(c as usize + 1, Vec::new());
        }
        for h in start..=c {
            let hash = self.chain.main_chain()[h as usize];
            let seen = &mut self.ever_confirmed[h as usize];
            if !seen.contains(&hash) {
                seen.push(hash);
            }
            let block = self.chain.block(&hash).expect("main chain block");
            for tx in block.transactions() {
                for key in spend_keys(tx) {
                    if let Some(prev) = self.spends.insert(key, tx.tx_id()) {
                        if prev != tx.tx_id() {
                            self.conflicted = true;
                        }
                    }
                }
            }
        }
        self.recorded_upto = c;
        self.book.prune_below(c);
    }
}

/// Diff between an old head and the current main chain.
struct HeadChange {
    fork_height: u64,
    reverted: Vec<BlockHash>,
    adopted: Vec<BlockHash>,
}

fn head_change(chain: &ChainState, old_head: BlockHash) -> Option<HeadChange> {
    let new_head = chain.main_head();
    if new_head == old_head {
        return None;
    }
    let mut cur = old_head;
    let mut reverted = Vec::new();
    while !chain.is_on_main_chain(&cur) {
        reverted.push(cur);
        cur = chain.block(&cur).expect("old head stored").parent_hash();
    }
    reverted.reverse();
    let fork_height = chain.block(&cur).expect("fork stored").height();
    let adopted = chain.main_chain()[fork_height as usize + 1..].to_vec();
    Some(HeadChange {
        fork_height,
        reverted,
        adopted,
    })
}

/// Bookkeeping after any operation that may have moved an honest node's
/// head: returning abandoned transactions to the mempool, fork-win
/// broadcast, relay, and safety checks. Included transactions leave the
/// mempool at the next proposal's pruning pass.
fn after_update(
    sh: &Shared,
    me: usize,
    node: &mut Node,
    old_head: BlockHash,
    relay: Option<&Arc<Block>>,
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    let Some(change) = head_change(&node.chain, old_head) else {
        return;
    };
    for h in &change.reverted {
        let block = Arc::clone(node.chain.block(h).expect("stored"));
        for tx in block.transactions() {
            node.add_to_mempool(Arc::new(tx.clone()), sh.cfg.mempool_capacity);
        }
    }
    if node.adversary {
        return;
    }
    let accepted_invalid = change
        .adopted
        .iter()
        .filter(|h| stats.invalid_hashes.contains(h))
        .count();
    stats.invalid_accepted += accepted_invalid as u64;
    let old_height = change.fork_height + change.reverted.len() as u64;
    let old_confirmed = old_height.saturating_sub(u64::from(sh.cfg.chain.confirm_depth));
    if change.reverted.is_empty() {
        if let Some(b) = relay {
            if node.chain.is_on_main_chain(&b.block_hash()) {
                out.push(Out::All(me, Msg::Block(Arc::clone(b)), 1));
            }
        }
        node.track_confirmation(None);
        return;
    }
    stats.fork_switches += 1;
    if change.fork_height < old_confirmed {
        stats.confirmed_reverts += 1;
    }
    let blocks: Vec<Arc<Block>> = change
        .adopted
        .iter()
        .map(|h| Arc::clone(node.chain.block(h).expect("stored")))
        .collect();
    let msg = ForkWinMsg {
        branch_first_block: change.adopted[0],
        branch_head: node.chain.main_head(),
        sender: node.id,
    };
    stats.fork_win_msgs += 1;
    out.push(Out::All(
        me,
        Msg::ForkWin {
            msg,
            blocks: Arc::new(blocks),
        },
        1 + sh.cfg.fork_win_repeats,
    ));
    if sh.cfg.check_replay {
        stats.replay_checks += 1;
        if !node.chain.replay_matches() {
            stats.replay_mismatches += 1;
        }
        if !node.chain.conservation_holds() {
            stats.conservation_violations += 1;
        }
    }
    node.track_confirmation(Some(change.fork_height));
}

fn count_rejection(stats: &mut Stats, reason: RejectReason) {
    if matches!(reason, RejectReason::InvalidTx { .. }) {
        stats.invalid_rejected += 1;
    }
}

fn on_block(
    sh: &Shared,
    me: usize,
    from: usize,
    node: &mut Node,
    block: Arc<Block>,
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    let old_head = node.chain.main_head();
    match node.chain.apply_block(Arc::clone(&block)) {
        Err(RejectReason::Duplicate) => {}
        Err(reason) => count_rejection(stats, reason),
        Ok(crate::ledger::ApplyOutcome::Buffered) => {
            if !node.adversary {
                out.push(Out::To(
                    me,
                    from,
                    Msg::Pull {
                        want: block.parent_hash(),
                        locator: locator(&node.chain),
                    },
                ));
            }
        }
        Ok(_) => after_update(sh, me, node, old_head, Some(&block), stats, out),
    }
    for (_, reason) in node.chain.drain_rejections() {
        count_rejection(stats, reason);
    }
}

fn on_blocks(
    sh: &Shared,
    me: usize,
    node: &mut Node,
    blocks: &[Arc<Block>],
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    let old_head = node.chain.main_head();
    for b in blocks {
        match node.chain.apply_block(Arc::clone(b)) {
            Ok(_) | Err(RejectReason::Duplicate) => {}
            Err(reason) => count_rejection(stats, reason),
        }
    }
    for (_, reason) in node.chain.drain_rejections() {
        count_rejection(stats, reason);
    }
    after_update(sh, me, node, old_head, None, stats, out);
}

#[allow(clippy::too_many_arguments)]
fn on_fork_win(
    sh: &Shared,
    me: usize,
    from: usize,
    node: &mut Node,
    msg: &ForkWinMsg,
    blocks: &[Arc<Block>],
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    let old_head = node.chain.main_head();
    match node.chain.handle_fork_win(msg, blocks) {
        ForkWinOutcome::Missing(_) if !node.adversary => out.push(Out::To(
            me,
            from,
            Msg::Pull {
                want: msg.branch_head,
                locator: locator(&node.chain),
            },
        )),
        ForkWinOutcome::Invalid(reason) => count_rejection(stats, reason),
        _ => {}
    }
    for (_, reason) in node.chain.drain_rejections() {
        count_rejection(stats, reason);
    }
    after_update(sh, me, node, old_head, None, stats, out);
}

fn on_pull(
    me: usize,
    from: usize,
    node: &Node,
    want: &BlockHash,
    locator: &[BlockHash],
    out: &mut Vec<Out>,
) {
    if node.adversary || !node.chain.contains(want) {
        return;
    }
    let have: FxHashSet<&BlockHash> = locator.iter().collect();
    let mut blocks = Vec::new();
    let mut cur = *want;
    while blocks.len() < PULL_LIMIT && !have.contains(&cur) {
        let b = node.chain.block(&cur).expect("known");
        if b.is_genesis() {
            break;
        }
        blocks.push(Arc::clone(b));
        cur = b.parent_hash();
    }
    if !blocks.is_empty() {
        blocks.reverse();
        out.push(Out::To(me, from, Msg::Blocks(Arc::new(blocks))));
    }
}

#[allow(clippy::too_many_arguments)]
fn on_witness_request(
    sh: &Shared,
    me: usize,
    from: usize,
    node: &mut Node,
    req: &Arc<WitnessRequest>,
    now: u64,
    colluding: &[bool],
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    if node.adversary {
        if sh.cfg.adversary_strategy != AdversaryStrategy::None && colluding[from] {
            let sig = WitnessSignature {
                witness: node.id,
                signature: node.key.sign(&witness_message(&req.digest)),
            };
            out.push(Out::To(
                me,
                from,
                Msg::WitnessSig {
                    digest: req.digest,
                    sig,
                },
            ));
        }
        return;
    }
    match sign_witness(&node.key, req, &node.chain, &mut node.book, now as f64) {
        Ok(sig) => out.push(Out::To(
            me,
            from,
            Msg::WitnessSig {
                digest: req.digest,
                sig,
            },
        )),
        Err(refusal) => {
            *stats
                .witness_refusals
                .entry(refusal.code().to_string())
                .or_default() += 1
        }
    }
}

fn on_witness_sig(
    sh: &Shared,
    me: usize,
    node: &mut Node,
    digest: &BlockHash,
    sig: WitnessSignature,
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    let Some(pos) = node
        .pending
        .iter()
        .position(|p| p.request.digest == *digest)
    else {
        return;
    };
    let p = &mut node.pending[pos];
    if p.sigs.iter().any(|s| s.witness == sig.witness) {
        return;
    }
    p.sigs.push(sig);
    if p.sigs.len() < sh.cfg.chain.witness_m as usize {
        return;
    }
    let Ok(block) = mint_block(&p.request, &p.sigs, &sh.cfg.chain, &sh.hooks) else {
        return;
    };
    let p = node.pending.swap_remove(pos);
    let block = Arc::new(block);
    stats.blocks_minted += 1;
    if p.invalid {
        stats.invalid_minted += 1;
        stats.invalid_hashes.insert(block.block_hash());
    } else {
        let old_head = node.chain.main_head();
        if node.chain.apply_block(Arc::clone(&block)).is_ok() {
            after_update(sh, me, node, old_head, None, stats, out);
        }
    }
    match p.target {
        Target::All => out.push(Out::All(me, Msg::Block(block), 1)),
        Target::Half(parity) => out.push(Out::HonestHalf(me, Msg::Block(block), parity)),
    }
}

#[allow(clippy::too_many_arguments)]
fn request_witnesses(
    sh: &Shared,
    me: usize,
    node: &mut Node,
    request: WitnessRequest,
    now: u64,
    invalid: bool,
    target: Target,
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    let request = Arc::new(request);
    stats.proposals += 1;
    for &w in &sh.eligible[me] {
        out.push(Out::To(me, w, Msg::WitnessRequest(Arc::clone(&request))));
    }
    node.pending.push(Pending {
        request,
        sigs: Vec::new(),
        started: now,
        invalid,
        target,
    });
}

fn honest_propose(
    sh: &Shared,
    me: usize,
    node: &mut Node,
    now: u64,
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    let head_height = node.chain.head_height();
    let timeout = sh.cfg.proposal_timeout;
    node.pending
        .retain(|p| p.started + timeout > now && p.request.height() > head_height);
    if !node.pending.is_empty() {
        return;
    }
    node.prune_mempool();
    if let Ok(req) = propose_block(
        node.id,
        &node.chain,
        node.mempool.values().map(|t| &**t),
        sh.cfg.max_block_txs,
    ) {
        request_witnesses(sh, me, node, req, now, false, Target::All, stats, out);
    }
}

/// Owned coins on the node's head state, in outpoint order.
fn owned_coins(node: &Node, limit: usize) -> Vec<(OutPoint, u64)> {
    node.chain
        .index()
        .outputs_of(&node.id)
        .into_iter()
        .take(limit)
        .map(|(op, o)| (op, o.amount))
        .collect()
}

/// Two transactions spending the same nonce or coin toward different
/// recipients.
fn conflicting_pair(
    sh: &Shared,
    node: &Node,
    nonce: u64,
    coin: Option<(OutPoint, u64)>,
    a: NodeId,
    b: NodeId,
) -> Option<(Transaction, Transaction)> {
    let mk = |to: NodeId| -> Option<Transaction> {
        let body = match sh.cfg.tx_model {
            TxModel::Account => TxBody::Account {
                recipient: to,
                amount: 1,
                nonce,
            },
            TxModel::Utxo => {
                let (op, amount) = coin?;
                TxBody::Utxo {
                    inputs: vec![op],
                    outputs: vec![TxOutput { owner: to, amount }],
                }
            }
        };
        Some(Transaction::signed(&node.key, body))
    };
    Some((mk(a)?, mk(b)?))
}

fn adversary_propose(
    sh: &Shared,
    me: usize,
    node: &mut Node,
    now: u64,
    rng: &mut ChaCha8Rng,
    stats: &mut Stats,
    out: &mut Vec<Out>,
) {
    let timeout = sh.cfg.proposal_timeout;
    node.pending.retain(|p| p.started + timeout > now);
    if !node.pending.is_empty() {
        return;
    }
    let k = sh.cfg.chain.tx_count_min as usize;
    let head = node.chain.main_head();
    let height = node.chain.head_height() + 1;
    let n = sh.ids.len();
    let pick = |rng: &mut ChaCha8Rng| sh.ids[rng.random_range(0..n)];
    match sh.cfg.adversary_strategy {
        AdversaryStrategy::Equivocate => {
            let base = node.chain.index().next_nonce(&node.id);
            let coins = owned_coins(node, k);
            if sh.cfg.tx_model == TxModel::Utxo && coins.len() < k {
                return;
            }
            let (mut ta, mut tb) = (Vec::new(), Vec::new());
            for i in 0..k {
                let (a, b) = (pick(rng), pick(rng));
                let Some((x, y)) =
                    conflicting_pair(sh, node, base + i as u64, coins.get(i).copied(), a, b)
                else {
                    return;
                };
                if x.tx_id() == y.tx_id() {
                    return;
                }
                ta.push(x);
                tb.push(y);
            }
            for (parity, txs) in [(0, ta), (1, tb)] {
                let req = WitnessRequest::new(Block::new(head, height, node.id, txs));
                request_witnesses(
                    sh,
                    me,
                    node,
                    req,
                    now,
                    false,
                    Target::Half(parity),
                    stats,
                    out,
                );
            }
        }
        AdversaryStrategy::InvalidBlockPush => {
            let mut txs = Vec::new();
            let nonce = node.chain.index().next_nonce(&node.id);
            let balance = node.chain.index().balance(&node.id);
            let coins = owned_coins(node, k);
            for i in 0..k {
                let body = match sh.cfg.tx_model {
                    TxModel::Account => TxBody::Account {
                        recipient: pick(rng),
                        amount: balance.saturating_add(1 + i as u64),
                        nonce: nonce + i as u64,
                    },
                    TxModel::Utxo => {
                        let (op, amount) = match coins.get(i) {
                            Some(c) => *c,
                            None => (
                                OutPoint {
                                    tx_id: crate::crypto::hash256(&(now + i as u64).to_be_bytes()),
                                    index: 0,
                                },
                                0,
                            ),
                        };
                        TxBody::Utxo {
                            inputs: vec![op],
                            outputs: vec![TxOutput {
                                owner: pick(rng),
                                amount: amount.saturating_add(1),
                            }],
                        }
                    }
                };
                txs.push(Transaction::signed(&node.key, body));
            }
            let req = WitnessRequest::new(Block::new(head, height, node.id, txs));
            request_witnesses(sh, me, node, req, now, true, Target::All, stats, out);
        }
        AdversaryStrategy::None | AdversaryStrategy::DoubleSpend => {}
    }
}

/// Deterministic discrete-event run of the full protocol.
pub(crate) struct Simulation<'t> {
    sh: Shared,
    nodes: Vec<Node>,
    colluding: Vec<bool>,
    rng: ChaCha8Rng,
    queue: EventQueue<Event>,
    stats: Stats,
    out: Vec<Out>,
    now: u64,
    end: u64,
    trace: Option<&'t mut dyn Write>,
    trace_error: Option<std::io::Error>,
}

impl<'t> Simulation<'t> {
    pub(crate) fn new(cfg: &SimConfig, trace: Option<&'t mut dyn Write>) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = cfg.n_nodes;
        let keys: Vec<Keypair> = (0..n)
            .map(|_| Keypair::from_seed(cfg.chain.sig_scheme, rng.random()))
            .collect();
        let ids: Vec<NodeId> = keys.iter().map(Keypair::node_id).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut colluding = vec![false; n];
        for &i in &order[..cfg.n_adversaries()] {
            colluding[i] = true;
        }
        let honest: Vec<usize> = (0..n).filter(|&i| !colluding[i]).collect();

        let alloc = match cfg.tx_model {
            TxModel::Account => GenesisAlloc {
                accounts: ids.iter().map(|id| (*id, SIM_FUNDING)).collect(),
                utxos: Vec::new(),
            },
            TxModel::Utxo => GenesisAlloc {
                accounts: Vec::new(),
                utxos: ids
                    .iter()
                    .flat_map(|id| {
                        std::iter::repeat_n(
                            TxOutput {
                                owner: *id,
                                amount: SIM_FUNDING,
                            },
                            cfg.utxos_per_node,
                        )
                    })
                    .collect(),
            },
        };
        let genesis_hash = Block::genesis(&cfg.chain, &alloc).block_hash();
        let eligible: Vec<Vec<usize>> = (0..n)
            .map(|p| {
                (0..n)
                    .filter(|&w| {
                        crate::witness::is_eligible_witness(&ids[p], &ids[w], &cfg.chain)
                            .unwrap_or(false)
                    })
                    .collect()
            })
            .collect();
        let nodes = keys
            .into_iter()
            .enumerate()
            .map(|(i, key)| {
                let wallet = match cfg.tx_model {
                    TxModel::Account => Wallet::Account { next_nonce: 0 },
                    TxModel::Utxo => Wallet::Utxo {
                        coins: (0..cfg.utxos_per_node)
                            .map(|j| {
                                (
                                    OutPoint {
                                        tx_id: genesis_hash,
                                        index: (i * cfg.utxos_per_node + j) as u32,
                                    },
                                    SIM_FUNDING,
                                )
                            })
                            .collect(),
                    },
                };
                Node {
                    id: ids[i],
                    key,
                    adversary: colluding[i],
                    chain: ChainState::new(cfg.chain.clone(), alloc.clone()),
                    mempool: IndexMap::new(),
                    book: WitnessBook::new(cfg.proposal_timeout as f64),
                    pending: Vec::new(),
                    wallet,
                    ever_confirmed: Vec::new(),
                    recorded_upto: 0,
                    spends: FxHashMap::default(),
                    conflicted: false,
                }
            })
            .collect();
        let hooks = cfg.reward.map(|r| r.hooks()).unwrap_or_default();
        let mut queue = EventQueue::new();
        queue.push(1, Event::InjectTx);
        queue.push(cfg.propose_interval, Event::ProposeTick);
        queue.push(cfg.status_interval, Event::StatusTick);
        Ok(Simulation {
            sh: Shared {
                cfg: cfg.clone(),
                ids,
                honest,
                eligible,
                hooks,
            },
            nodes,
            colluding,
            rng,
            queue,
            stats: Stats::default(),
            out: Vec::new(),
            now: 0,
            end: cfg.duration + cfg.settle_ticks,
            trace,
            trace_error: None,
        })
    }

    fn send(&mut self, from: usize, to: usize, msg: Msg) {
        self.stats.messages_sent += 1;
        let r = self.sh.cfg.delivery_ratio;
        if r < 1.0 && !self.rng.random_bool(r) {
            return;
        }
        let at = self.now + self.sh.cfg.latency.sample(&mut self.rng);
        if at <= self.end {
            self.queue.push(at, Event::Deliver { to, from, msg });
        }
    }

    fn flush(&mut self) {
        let out = std::mem::take(&mut self.out);
        for o in out {
            match o {
                Out::To(from, to, msg) => self.send(from, to, msg),
                Out::All(from, msg, copies) => {
                    for to in 0..self.nodes.len() {
                        if to != from {
                            for _ in 0..copies {
                                self.send(from, to, msg.clone());
                            }
                        }
                    }
                }
                Out::HonestHalf(from, msg, parity) => {
                    for pos in (parity..self.sh.honest.len()).step_by(2) {
                        let to = self.sh.honest[pos];
                        self.send(from, to, msg.clone());
                    }
                }
            }
        }
    }

    fn new_transaction(&mut self, sender: usize) -> Transaction {
        let n = self.nodes.len();
        let mut to = self.rng.random_range(0..n);
        if to == sender && n > 1 {
            to = (to + 1) % n;
        }
        let amount = self.rng.random_range(1..=10u64);
        let recipient = self.sh.ids[to];
        let node = &mut self.nodes[sender];
        let body = match &mut node.wallet {
            Wallet::Account { next_nonce } => {
                let nonce = *next_nonce;
                *next_nonce += 1;
                TxBody::Account {
                    recipient,
                    amount,
                    nonce,
                }
            }
            Wallet::Utxo { coins } => {
                let (op, value) = coins.pop_front().expect("wallets never run dry");
                let mut outputs = vec![TxOutput {
                    owner: recipient,
                    amount,
                }];
                if value > amount {
                    outputs.push(TxOutput {
                        owner: node.id,
                        amount: value - amount,
                    });
                }
                TxBody::Utxo {
                    inputs: vec![op],
                    outputs,
                }
            }
        };
        let tx = Transaction::signed(&node.key, body);
        if let (Wallet::Utxo { coins }, TxBody::Utxo { outputs, .. }) =
            (&mut node.wallet, tx.body())
        {
            if let Some(change) = outputs.get(1) {
                coins.push_back((
                    OutPoint {
                        tx_id: tx.tx_id(),
                        index: 1,
                    },
                    change.amount,
                ));
            }
        }
        tx.verify_signature(self.sh.cfg.chain.sig_scheme);
        tx
    }

    fn draw_count(&mut self, rate: f64) -> u64 {
        let whole = rate.floor();
        let frac = rate - whole;
        whole as u64 + u64::from(frac > 0.0 && self.rng.random_bool(frac))
    }

    fn inject(&mut self) {
        let count = self.draw_count(self.sh.cfg.tx_rate);
        for _ in 0..count {
            if self.sh.honest.is_empty() {
                break;
            }
            let sender = self.sh.honest[self.rng.random_range(0..self.sh.honest.len())];
            let tx = Arc::new(self.new_transaction(sender));
            let cap = self.sh.cfg.mempool_capacity;
            self.nodes[sender].add_to_mempool(Arc::clone(&tx), cap);
            self.out.push(Out::All(sender, Msg::Tx(tx), 1));
        }
        if self.sh.cfg.adversary_strategy == AdversaryStrategy::DoubleSpend {
            for adv in 0..self.nodes.len() {
                if !self.colluding[adv] {
                    continue;
                }
                for _ in 0..self.draw_count(self.sh.cfg.adversary_tx_rate) {
                    self.double_spend(adv);
                }
            }
        }
        self.flush();
    }

    fn double_spend(&mut self, adv: usize) {
        let n = self.nodes.len();
        let a = self.sh.ids[self.rng.random_range(0..n)];
        let mut b = self.sh.ids[self.rng.random_range(0..n)];
        if a == b {
            b = self.sh.ids[(self.rng.random_range(0..n) + 1) % n];
        }
        let (nonce, coin) = match self.sh.cfg.tx_model {
            TxModel::Account => {
                let node = &mut self.nodes[adv];
                let on_chain = node.chain.index().next_nonce(&node.id);
                let Wallet::Account { next_nonce } = &mut node.wallet else {
                    unreachable!("wallet matches tx model")
                };
                let v = (*next_nonce).max(on_chain);
                *next_nonce = v + 1;
                (v, None)
            }
            TxModel::Utxo => {
                let coins = owned_coins(&self.nodes[adv], usize::MAX);
                if coins.is_empty() {
                    return;
                }
                let pick = self.rng.random_range(0..coins.len());
                (0, Some(coins[pick]))
            }
        };
        let node = &self.nodes[adv];
        let Some((x, y)) = conflicting_pair(&self.sh, node, nonce, coin, a, b) else {
            return;
        };
        if x.tx_id() == y.tx_id() {
            return;
        }
        let scheme = self.sh.cfg.chain.sig_scheme;
        x.verify_signature(scheme);
        y.verify_signature(scheme);
        self.stats.double_spend_pairs += 1;
        self.out.push(Out::HonestHalf(adv, Msg::Tx(Arc::new(x)), 0));
        self.out.push(Out::HonestHalf(adv, Msg::Tx(Arc::new(y)), 1));
    }

    fn propose(&mut self) {
        for me in 0..self.nodes.len() {
            let node = &mut self.nodes[me];
            if node.adversary {
                adversary_propose(
                    &self.sh,
                    me,
                    node,
                    self.now,
                    &mut self.rng,
                    &mut self.stats,
                    &mut self.out,
                );
            } else {
                honest_propose(&self.sh, me, node, self.now, &mut self.stats, &mut self.out);
            }
        }
        self.flush();
    }

    fn status(&mut self) {
        for &me in &self.sh.honest {
            let head = self.nodes[me].chain.main_head();
            self.out.push(Out::All(me, Msg::Status { head }, 1));
        }
        self.flush();
    }

    fn deliver(&mut self, to: usize, from: usize, msg: Msg) {
        self.stats.messages_delivered += 1;
        let sh = &self.sh;
        let node = &mut self.nodes[to];
        let stats = &mut self.stats;
        let out = &mut self.out;
        match msg {
            Msg::Tx(tx) => {
                if !node.adversary {
                    node.add_to_mempool(tx, sh.cfg.mempool_capacity);
                }
            }
            Msg::WitnessRequest(req) => on_witness_request(
                sh,
                to,
                from,
                node,
                &req,
                self.now,
                &self.colluding,
                stats,
                out,
            ),
            Msg::WitnessSig { digest, sig } => {
                on_witness_sig(sh, to, node, &digest, sig, stats, out)
            }
            Msg::Block(b) => on_block(sh, to, from, node, b, stats, out),
            Msg::ForkWin { msg, blocks } => {
                on_fork_win(sh, to, from, node, &msg, &blocks, stats, out)
            }
            Msg::Status { head } => {
                if !node.adversary && !node.chain.contains(&head) && !node.chain.is_orphan(&head) {
                    out.push(Out::To(
                        to,
                        from,
                        Msg::Pull {
                            want: head,
                            locator: locator(&node.chain),
                        },
                    ));
                }
            }
            Msg::Pull { want, locator } => on_pull(to, from, node, &want, &locator, out),
            Msg::Blocks(blocks) => on_blocks(sh, to, node, &blocks, stats, out),
        }
        self.flush();
    }

    fn write_trace(&mut self, line: std::fmt::Arguments<'_>) {
        if let Some(w) = self.trace.as_mut() {
            if self.trace_error.is_none() {
                if let Err(e) = w.write_fmt(line).and_then(|_| w.write_all(b"\n")) {
                    self.trace_error = Some(e);
                }
            }
        }
    }

    pub(crate) fn run(mut self) -> Result<(SimReport, Option<ChainState>), SimError> {
        let cfg = self.sh.cfg.clone();
        while let Some((at, event)) = self.queue.pop() {
            if at > self.end {
                break;
            }
            self.now = at;
            self.stats.events_processed += 1;
            match event {
                Event::InjectTx => {
                    if self.trace.is_some() {
                        self.write_trace(format_args!(r#"{{"at":{at},"event":"inject_tx"}}"#));
                    }
                    self.inject();
                    if at < cfg.duration {
                        self.queue.push(at + 1, Event::InjectTx);
                    }
                }
                Event::ProposeTick => {
                    if self.trace.is_some() {
                        self.write_trace(format_args!(r#"{{"at":{at},"event":"propose_tick"}}"#));
                    }
                    self.propose();
                    if at + cfg.propose_interval <= cfg.duration {
                        self.queue
                            .push(at + cfg.propose_interval, Event::ProposeTick);
                    }
                }
                Event::StatusTick => {
                    if self.trace.is_some() {
                        self.write_trace(format_args!(r#"{{"at":{at},"event":"status_tick"}}"#));
                    }
                    self.status();
                    if at + cfg.status_interval <= self.end {
                        self.queue.push(at + cfg.status_interval, Event::StatusTick);
                    }
                }
                Event::Deliver { to, from, msg } => {
                    if self.trace.is_some() {
                        let (label, subject) = (msg.label(), msg.subject());
                        self.write_trace(format_args!(
                            r#"{{"at":{at},"event":"deliver_msg","from":{from},"to":{to},"msg":"{label}","id":"{subject}"}}"#
                        ));
                    }
                    self.deliver(to, from, msg);
                }
            }
        }
        if let Some(e) = self.trace_error.take() {
            return Err(SimError::Io(e.to_string()));
        }
        Ok(self.finish())
    }

    /// Final report plus the ledger of the first honest node, if any.
    fn finish(mut self) -> (SimReport, Option<ChainState>) {
        let honest = self.sh.honest.clone();
        for &i in &honest {
            if !self.nodes[i].chain.conservation_holds() {
                self.stats.conservation_violations += 1;
            }
        }
        let prefixes: Vec<&[BlockHash]> = honest
            .iter()
            .map(|&i| self.nodes[i].chain.confirmed_prefix())
            .collect();
        let longest = prefixes
            .iter()
            .copied()
            .max_by_key(|p| p.len())
            .unwrap_or(&[]);
        let compatible = prefixes.iter().all(|p| longest.starts_with(p));
        let identical = prefixes.windows(2).all(|w| w[0] == w[1]);
        let common = prefixes
            .iter()
            .map(|p| p.iter().zip(longest).take_while(|(a, b)| a == b).count())
            .min()
            .unwrap_or(0);
        let common_height = common.saturating_sub(1) as u64;
        let txs_confirmed = honest
            .first()
            .map(|&i| {
                let chain = &self.nodes[i].chain;
                chain.main_chain()[1..common.max(1)]
                    .iter()
                    .map(|h| chain.block(h).expect("stored").user_tx_count() as u64)
                    .sum()
            })
            .unwrap_or(0);

        // Plurality block per height over honest final main chains.
        let max_h = honest
            .iter()
            .map(|&i| self.nodes[i].chain.head_height())
            .max()
            .unwrap_or(0);
        let mut reference = vec![None; max_h as usize + 1];
        for (h, slot) in reference.iter_mut().enumerate() {
            let mut counts: BTreeMap<BlockHash, usize> = BTreeMap::new();
            for &i in &honest {
                if let Some(hash) = self.nodes[i].chain.main_chain().get(h) {
                    *counts.entry(*hash).or_default() += 1;
                }
            }
            *slot = counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(hash, _)| hash);
        }
        let misled = honest
            .iter()
            .filter(|&&i| {
                self.nodes[i]
                    .ever_confirmed
                    .iter()
                    .enumerate()
                    .any(|(h, seen)| {
                        seen.iter().any(|hash| {
                            reference
                                .get(h)
                                .copied()
                                .flatten()
                                .is_some_and(|r| r != *hash)
                        })
                    })
            })
            .count() as u64;
        let conflicting = honest.iter().filter(|&&i| self.nodes[i].conflicted).count() as u64;

        let heads = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| NodeHead {
                node: i,
                id: n.id,
                adversary: n.adversary,
                head: n.chain.main_head(),
                height: n.chain.head_height(),
                confirmed_height: n.chain.confirmed_height(),
            })
            .collect();
        let s = self.stats;
        let report = SimReport {
            seed: self.sh.cfg.seed,
            n_nodes: self.nodes.len(),
            n_adversaries: self.nodes.len() - honest.len(),
            misled_events: misled,
            hard_forks: u64::from(!compatible),
            invalid_minted: s.invalid_minted,
            blocks_minted: s.blocks_minted,
            double_spend_pairs: s.double_spend_pairs,
            txs_confirmed,
            fork_win_msgs: s.fork_win_msgs,
            fork_switches: s.fork_switches,
            confirmed_reverts: s.confirmed_reverts,
            replay_checks: s.replay_checks,
            replay_mismatches: s.replay_mismatches,
            conservation_violations: s.conservation_violations,
            conflicting_confirmed: conflicting,
            invalid_rejected: s.invalid_rejected,
            invalid_accepted: s.invalid_accepted,
            prefixes_identical: identical,
            common_confirmed_height: common_height,
            proposals: s.proposals,
            witness_refusals: s.witness_refusals,
            messages_sent: s.messages_sent,
            messages_delivered: s.messages_delivered,
            events_processed: s.events_processed,
            heads,
        };
        let first_honest = honest.first().map(|&i| self.nodes.swap_remove(i).chain);
        (report, first_honest)
    }
}
