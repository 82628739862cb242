//! Core protocol types: 256-bit integers, node identities, transactions,
//! blocks and chain parameters.
//!
//! Every value here is immutable once built. Hashes (`tx_id`, `block_hash`)
//! are computed from the canonical byte layout in [`crate::codec`] at
//! construction time and cached.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec;
use crate::crypto::{hash256, Keypair, SigScheme, Signature};
use crate::error::ConfigError;

/// Unsigned 256-bit integer stored as 32 big-endian bytes.
///
/// Lexicographic byte order equals numeric order; comparison and hashing
/// work on four big-endian words.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct U256([u8; 32]);

fn words(b: &[u8; 32]) -> [u64; 4] {
    let mut w = [0u64; 4];
    for (out, chunk) in w.iter_mut().zip(b.chunks_exact(8)) {
        *out = u64::from_be_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    w
}

fn cmp_bytes(a: &[u8; 32], b: &[u8; 32]) -> std::cmp::Ordering {
    words(a).cmp(&words(b))
}

fn hash_bytes<H: std::hash::Hasher>(b: &[u8; 32], state: &mut H) {
    for w in words(b) {
        state.write_u64(w);
    }
}

impl PartialOrd for U256 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for U256 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        cmp_bytes(&self.0, &other.0)
    }
}

impl std::hash::Hash for U256 {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        hash_bytes(&self.0, state);
    }
}

impl U256 {
    pub const ZERO: U256 = U256([0; 32]);
    pub const MAX: U256 = U256([0xff; 32]);

    pub const fn from_be_bytes(bytes: [u8; 32]) -> Self {
        U256(bytes)
    }

    pub const fn to_be_bytes(self) -> [u8; 32] {
        self.0
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn from_u64(v: u64) -> Self {
        let mut out = [0u8; 32];
        out[24..].copy_from_slice(&v.to_be_bytes());
        U256(out)
    }

    /// `2^bit`; `bit` must be below 256.
    pub fn pow2(bit: u32) -> Self {
        assert!(bit < 256, "2^{bit} does not fit in 256 bits");
        let mut out = [0u8; 32];
        let byte = 31 - (bit / 8) as usize;
        out[byte] = 1 << (bit % 8);
        U256(out)
    }

    pub fn xor(&self, other: &U256) -> U256 {
        let mut out = [0u8; 32];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a ^ b;
        }
        U256(out)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 32]
    }

    /// `floor(fraction * 2^256)`, saturating at [`U256::MAX`] for
    /// `fraction >= 1` and at zero for non-positive input.
    pub fn from_fraction(fraction: f64) -> Self {
        if fraction.is_nan() || fraction <= 0.0 {
            return U256::ZERO;
        }
        if fraction >= 1.0 {
            return U256::MAX;
        }
        let mut out = [0u8; 32];
        let mut rest = fraction;
        for byte in out.iter_mut() {
            rest *= 256.0;
            let digit = rest.floor();
            *byte = digit as u8;
            rest -= digit;
            if rest == 0.0 {
                break;
            }
        }
        U256(out)
    }

    /// `self / 2^256` as a float (rounded).
    pub fn to_fraction(&self) -> f64 {
        self.0
            .iter()
            .rev()
            .fold(0.0, |acc, &b| (acc + f64::from(b)) / 256.0)
    }

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U256({})", self.to_hex())
    }
}

impl fmt::Display for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for U256 {
    type Err = hex::FromHexError;

    /// Accepts up to 64 hex digits with an optional `0x` prefix; short input
    /// is left-padded with zeros.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix("0x").unwrap_or(s);
        if digits.len() > 64 {
            return Err(hex::FromHexError::InvalidStringLength);
        }
        let padded = format!("{digits:0>64}");
        let mut out = [0u8; 32];
        hex::decode_to_slice(padded, &mut out)?;
        Ok(U256(out))
    }
}

impl Serialize for U256 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for U256 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type BlockHash = U256;
pub type TxId = U256;

/// A node identity: its 32-byte public key plus the cached SHA-256 digest of
/// that key. Equality, ordering and hashing use the public key only.
#[derive(Clone, Copy)]
pub struct NodeId {
    public_key: [u8; 32],
    key_digest: U256,
}

impl NodeId {
    pub fn from_public_key(public_key: [u8; 32]) -> Self {
        NodeId {
            public_key,
            key_digest: hash256(&public_key),
        }
    }

    /// Reserved all-zero identity used as the sender of coinbase
    /// transactions.
    pub fn system() -> Self {
        NodeId::from_public_key([0; 32])
    }

    pub fn public_key(&self) -> &[u8; 32] {
        &self.public_key
    }

    pub fn key_digest(&self) -> U256 {
        self.key_digest
    }

    pub fn short(&self) -> String {
        hex::encode(&self.public_key[..4])
    }
}

impl PartialEq for NodeId {
    fn eq(&self, other: &Self) -> bool {
        self.public_key == other.public_key
    }
}

impl Eq for NodeId {}

impl std::hash::Hash for NodeId {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        hash_bytes(&self.public_key, state);
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        cmp_bytes(&self.public_key, &other.public_key)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.short())
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.public_key))
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut pk = [0u8; 32];
        hex::decode_to_slice(s, &mut pk).map_err(serde::de::Error::custom)?;
        Ok(NodeId::from_public_key(pk))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxModel {
    Account,
    Utxo,
}

/// Reference to output `index` of transaction `tx_id`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutPoint {
    pub tx_id: TxId,
    pub index: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOutput {
    pub owner: NodeId,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TxBody {
    /// Account-model transfer; `nonce` must equal the sender's next expected
    /// nonce.
    Account {
        recipient: NodeId,
        amount: u64,
        nonce: u64,
    },
    /// UTXO-model transfer spending `inputs` owned by the sender.
    Utxo {
        inputs: Vec<OutPoint>,
        outputs: Vec<TxOutput>,
    },
    /// Newly issued value. Sent by [`NodeId::system`], unsigned; `height`
    /// must equal the height of the containing block.
    Coinbase {
        model: TxModel,
        height: u64,
        outputs: Vec<TxOutput>,
    },
}

/// A signed value transfer. `tx_id` is the SHA-256 of the full canonical
/// encoding, signature included.
#[derive(Clone, Debug)]
pub struct Transaction {
    sender: NodeId,
    body: TxBody,
    signature: Signature,
    tx_id: TxId,
    /// Memoized signature check, one slot per scheme.
    sig_ok: [OnceLock<bool>; 2],
}

impl Transaction {
    pub fn from_parts(sender: NodeId, body: TxBody, signature: Signature) -> Self {
        let mut tx = Transaction {
            sender,
            body,
            signature,
            tx_id: U256::ZERO,
            sig_ok: Default::default(),
        };
        tx.tx_id = hash256(&codec::encode_transaction(&tx));
        tx
    }

    pub fn signed(keypair: &Keypair, body: TxBody) -> Self {
        let sender = keypair.node_id();
        let msg = codec::transaction_signing_bytes(&sender, &body);
        Transaction::from_parts(sender, body, keypair.sign(&msg))
    }

    pub fn coinbase(model: TxModel, height: u64, outputs: Vec<TxOutput>) -> Self {
        Transaction::from_parts(
            NodeId::system(),
            TxBody::Coinbase {
                model,
                height,
                outputs,
            },
            Signature::Empty,
        )
    }

    pub fn sender(&self) -> &NodeId {
        &self.sender
    }

    pub fn body(&self) -> &TxBody {
        &self.body
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn tx_id(&self) -> TxId {
        self.tx_id
    }

    pub fn model(&self) -> TxModel {
        match &self.body {
            TxBody::Account { .. } => TxModel::Account,
            TxBody::Utxo { .. } => TxModel::Utxo,
            TxBody::Coinbase { model, .. } => *model,
        }
    }

    pub fn is_coinbase(&self) -> bool {
        matches!(self.body, TxBody::Coinbase { .. })
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::transaction_signing_bytes(&self.sender, &self.body)
    }

    pub fn verify_signature(&self, scheme: SigScheme) -> bool {
        let slot = match scheme {
            SigScheme::Ed25519 => &self.sig_ok[0],
            SigScheme::KeyedHash => &self.sig_ok[1],
        };
        *slot.get_or_init(|| scheme.verify(&self.sender, &self.signing_bytes(), &self.signature))
    }

    /// Sum of outputs (value created for recipients).
    pub fn output_value(&self) -> u128 {
        match &self.body {
            TxBody::Account { amount, .. } => u128::from(*amount),
            TxBody::Utxo { outputs, .. } | TxBody::Coinbase { outputs, .. } => {
                outputs.iter().map(|o| u128::from(o.amount)).sum()
            }
        }
    }
}

impl PartialEq for Transaction {
    fn eq(&self, other: &Self) -> bool {
        self.tx_id == other.tx_id
            && self.sender == other.sender
            && self.body == other.body
            && self.signature == other.signature
    }
}

impl Eq for Transaction {}

impl Serialize for Transaction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            tx_id: &'a TxId,
            sender: &'a NodeId,
            #[serde(flatten)]
            body: &'a TxBody,
            signature: &'a Signature,
        }
        View {
            tx_id: &self.tx_id,
            sender: &self.sender,
            body: &self.body,
            signature: &self.signature,
        }
        .serialize(s)
    }
}

/// A witness endorsement: `signature` by `witness` over the proposal digest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessSignature {
    pub witness: NodeId,
    pub signature: Signature,
}

/// A block. `block_hash` commits to the header and every transaction but
/// not to `witness_sigs`, which form a detachable certificate.
#[derive(Clone, Debug)]
pub struct Block {
    parent_hash: BlockHash,
    height: u64,
    proposer: NodeId,
    transactions: Vec<Transaction>,
    witness_sigs: Vec<WitnessSignature>,
    block_hash: BlockHash,
    witness_digest: U256,
    pub(crate) score: OnceLock<U256>,
}

impl Block {
    pub fn new(
        parent_hash: BlockHash,
        height: u64,
        proposer: NodeId,
        transactions: Vec<Transaction>,
    ) -> Self {
        let mut block = Block {
            parent_hash,
            height,
            proposer,
            transactions,
            witness_sigs: Vec::new(),
            block_hash: U256::ZERO,
            witness_digest: U256::ZERO,
            score: OnceLock::new(),
        };
        block.block_hash = hash256(&codec::block_content_bytes(&block, true));
        block.witness_digest = if block.transactions.iter().any(Transaction::is_coinbase) {
            hash256(&codec::block_content_bytes(&block, false))
        } else {
            block.block_hash
        };
        block
    }

    /// The height-0 block every node derives from the chain parameters and
    /// the initial allocation: zero parent, no transactions, no witnesses.
    pub fn genesis(config: &ChainConfig, alloc: &GenesisAlloc) -> Self {
        let commitment = hash256(&codec::genesis_commitment_bytes(config, alloc));
        Block::new(
            U256::ZERO,
            0,
            NodeId::from_public_key(commitment.to_be_bytes()),
            Vec::new(),
        )
    }

    pub fn with_witness_sigs(mut self, sigs: Vec<WitnessSignature>) -> Self {
        self.witness_sigs = sigs;
        self
    }

    pub fn parent_hash(&self) -> BlockHash {
        self.parent_hash
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn proposer(&self) -> &NodeId {
        &self.proposer
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn witness_sigs(&self) -> &[WitnessSignature] {
        &self.witness_sigs
    }

    pub fn block_hash(&self) -> BlockHash {
        self.block_hash
    }

    /// Digest witnesses sign: the block hash computed without coinbase
    /// transactions. Mint hooks append coinbase outputs after signatures are
    /// collected, so this is what stays stable across minting. Equal to
    /// `block_hash` when the block carries no coinbase.
    pub fn witness_digest(&self) -> U256 {
        self.witness_digest
    }

    /// Transactions that count toward the minimum transaction count.
    pub fn user_tx_count(&self) -> usize {
        self.transactions
            .iter()
            .filter(|t| !t.is_coinbase())
            .count()
    }

    pub fn is_genesis(&self) -> bool {
        self.height == 0 && self.parent_hash.is_zero()
    }
}

impl PartialEq for Block {
    fn eq(&self, other: &Self) -> bool {
        self.block_hash == other.block_hash
            && self.parent_hash == other.parent_hash
            && self.height == other.height
            && self.proposer == other.proposer
            && self.transactions == other.transactions
            && self.witness_sigs == other.witness_sigs
    }
}

impl Eq for Block {}

impl Serialize for Block {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            block_hash: &'a BlockHash,
            parent_hash: &'a BlockHash,
            height: u64,
            proposer: &'a NodeId,
            transactions: &'a [Transaction],
            witness_sigs: &'a [WitnessSignature],
        }
        View {
            block_hash: &self.block_hash,
            parent_hash: &self.parent_hash,
            height: self.height,
            proposer: &self.proposer,
            transactions: &self.transactions,
            witness_sigs: &self.witness_sigs,
        }
        .serialize(s)
    }
}

/// Chain-wide protocol parameters shared by every node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    /// Minimum number of non-coinbase transactions per block (TX_COUNT).
    pub tx_count_min: u32,
    /// Witness signatures required to mint (m).
    pub witness_m: u32,
    /// Confirmation depth (n_c).
    pub confirm_depth: u32,
    /// Exclusive upper bound on proposer/witness key distance.
    pub witness_threshold: U256,
    pub sig_scheme: SigScheme,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            tx_count_min: 2,
            witness_m: 2,
            confirm_depth: 3,
            witness_threshold: U256::pow2(255),
            sig_scheme: SigScheme::Ed25519,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("tx_count_min", self.tx_count_min),
            ("witness_m", self.witness_m),
            ("confirm_depth", self.confirm_depth),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(ConfigError::invalid(key, "must be a positive integer"));
            }
        }
        if self.witness_threshold.is_zero() {
            return Err(ConfigError::invalid("witness_threshold", "must be > 0"));
        }
        Ok(())
    }
}

/// Initial value distribution fixed at genesis. UTXO allocations are
/// spendable as outpoints `(genesis_hash, i)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisAlloc {
    pub accounts: Vec<(NodeId, u64)>,
    pub utxos: Vec<TxOutput>,
}

impl GenesisAlloc {
    pub fn total(&self) -> u128 {
        let accounts: u128 = self.accounts.iter().map(|(_, a)| u128::from(*a)).sum();
        let utxos: u128 = self.utxos.iter().map(|o| u128::from(o.amount)).sum();
        accounts + utxos
    }
}
