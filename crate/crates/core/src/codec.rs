//! Canonical byte layout for transactions and blocks.
//!
//! Fixed field order, big-endian fixed-width integers, `u32` count prefixes
//! on every list, and a one-byte format tag at the start of every top-level
//! value. The full layout is documented in `docs/FORMAT.md`; any change here
//! must bump [`FORMAT_TAG`].

use crate::crypto::{SigScheme, Signature};
use crate::error::CodecError;
use crate::types::{
    Block, ChainConfig, GenesisAlloc, NodeId, OutPoint, Transaction, TxBody, TxModel, TxOutput,
    WitnessSignature, U256,
};

pub const FORMAT_TAG: u8 = 0x01;

const KIND_ACCOUNT: u8 = 0;
const KIND_UTXO: u8 = 1;
const KIND_COINBASE: u8 = 2;

const SIG_EMPTY: u8 = 0;
const SIG_KEYED_HASH: u8 = 1;
const SIG_ED25519: u8 = 2;

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Writer {
            buf: Vec::with_capacity(n),
        }
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub(crate) fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub(crate) fn u256(&mut self, v: &U256) {
        self.bytes(v.as_bytes());
    }

    pub(crate) fn node(&mut self, n: &NodeId) {
        self.bytes(n.public_key());
    }

    pub(crate) fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("list longer than u32::MAX"));
    }

    pub(crate) fn model(&mut self, m: TxModel) {
        self.u8(match m {
            TxModel::Account => 0,
            TxModel::Utxo => 1,
        });
    }

    pub(crate) fn outpoints(&mut self, ops: &[OutPoint]) {
        self.len(ops.len());
        for op in ops {
            self.u256(&op.tx_id);
            self.u32(op.index);
        }
    }

    pub(crate) fn outputs(&mut self, outs: &[TxOutput]) {
        self.len(outs.len());
        for o in outs {
            self.node(&o.owner);
            self.u64(o.amount);
        }
    }

    fn signature(&mut self, sig: &Signature) {
        match sig {
            Signature::Empty => self.u8(SIG_EMPTY),
            Signature::KeyedHash(b) => {
                self.u8(SIG_KEYED_HASH);
                self.bytes(b);
            }
            Signature::Ed25519(b) => {
                self.u8(SIG_ED25519);
                self.bytes(b);
            }
        }
    }

    pub(crate) fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

struct Reader<'a> {
    data: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.data.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, tail) = self.data.split_at(n);
        self.data = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    fn u256(&mut self) -> Result<U256, CodecError> {
        Ok(U256::from_be_bytes(self.array()?))
    }

    fn node(&mut self) -> Result<NodeId, CodecError> {
        Ok(NodeId::from_public_key(self.array()?))
    }

    /// Reads a count prefix, rejecting counts that could not possibly fit
    /// in the remaining input.
    fn count(&mut self, min_item_len: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item_len) > self.data.len() {
            return Err(CodecError::Truncated);
        }
        Ok(n)
    }

    fn tag(&mut self) -> Result<(), CodecError> {
        match self.u8()? {
            FORMAT_TAG => Ok(()),
            other => Err(CodecError::FormatTag(other)),
        }
    }

    fn model(&mut self) -> Result<TxModel, CodecError> {
        match self.u8()? {
            0 => Ok(TxModel::Account),
            1 => Ok(TxModel::Utxo),
            value => Err(CodecError::Discriminant {
                what: "model",
                value,
            }),
        }
    }

    fn outpoints(&mut self) -> Result<Vec<OutPoint>, CodecError> {
        let n = self.count(36)?;
        (0..n)
            .map(|_| {
                Ok(OutPoint {
                    tx_id: self.u256()?,
                    index: self.u32()?,
                })
            })
            .collect()
    }

    fn outputs(&mut self) -> Result<Vec<TxOutput>, CodecError> {
        let n = self.count(40)?;
        (0..n)
            .map(|_| {
                Ok(TxOutput {
                    owner: self.node()?,
                    amount: self.u64()?,
                })
            })
            .collect()
    }

    fn signature(&mut self) -> Result<Signature, CodecError> {
        match self.u8()? {
            SIG_EMPTY => Ok(Signature::Empty),
            SIG_KEYED_HASH => Ok(Signature::KeyedHash(self.array()?)),
            SIG_ED25519 => Ok(Signature::Ed25519(self.array()?)),
            value => Err(CodecError::Discriminant {
                what: "signature",
                value,
            }),
        }
    }

    fn finish(&self) -> Result<(), CodecError> {
        match self.data.len() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

fn write_unsigned_tx(w: &mut Writer, sender: &NodeId, body: &TxBody) {
    w.u8(FORMAT_TAG);
    match body {
        TxBody::Account {
            recipient,
            amount,
            nonce,
        } => {
            w.u8(KIND_ACCOUNT);
            w.node(sender);
            w.node(recipient);
            w.u64(*amount);
            w.u64(*nonce);
        }
        TxBody::Utxo { inputs, outputs } => {
            w.u8(KIND_UTXO);
            w.node(sender);
            w.outpoints(inputs);
            w.outputs(outputs);
        }
        TxBody::Coinbase {
            model,
            height,
            outputs,
        } => {
            w.u8(KIND_COINBASE);
            w.node(sender);
            w.model(*model);
            w.u64(*height);
            w.outputs(outputs);
        }
    }
}

/// Bytes a transaction's sender signs: the encoding minus the signature.
pub fn transaction_signing_bytes(sender: &NodeId, body: &TxBody) -> Vec<u8> {
    let mut w = Writer::with_capacity(128);
    write_unsigned_tx(&mut w, sender, body);
    w.into_inner()
}

pub fn encode_transaction(tx: &Transaction) -> Vec<u8> {
    let mut w = Writer::with_capacity(160);
    write_unsigned_tx(&mut w, tx.sender(), tx.body());
    w.signature(tx.signature());
    w.into_inner()
}

fn read_transaction(r: &mut Reader<'_>) -> Result<Transaction, CodecError> {
    r.tag()?;
    let kind = r.u8()?;
    let sender = r.node()?;
    let body = match kind {
        KIND_ACCOUNT => TxBody::Account {
            recipient: r.node()?,
            amount: r.u64()?,
            nonce: r.u64()?,
        },
        KIND_UTXO => TxBody::Utxo {
            inputs: r.outpoints()?,
            outputs: r.outputs()?,
        },
        KIND_COINBASE => TxBody::Coinbase {
            model: r.model()?,
            height: r.u64()?,
            outputs: r.outputs()?,
        },
        value => {
            return Err(CodecError::Discriminant {
                what: "transaction kind",
                value,
            })
        }
    };
    let signature = r.signature()?;
    Ok(Transaction::from_parts(sender, body, signature))
}

pub fn decode_transaction(bytes: &[u8]) -> Result<Transaction, CodecError> {
    let mut r = Reader { data: bytes };
    let tx = read_transaction(&mut r)?;
    r.finish()?;
    Ok(tx)
}

fn write_block_content(w: &mut Writer, block: &Block, include_coinbase: bool) {
    w.u8(FORMAT_TAG);
    w.u256(&block.parent_hash());
    w.u64(block.height());
    w.node(block.proposer());
    let txs: Vec<&Transaction> = block
        .transactions()
        .iter()
        .filter(|t| include_coinbase || !t.is_coinbase())
        .collect();
    w.len(txs.len());
    for tx in txs {
        let bytes = encode_transaction(tx);
        w.len(bytes.len());
        w.bytes(&bytes);
    }
}

/// Header and transactions, without the witness section. `block_hash` is
/// the hash of this with `include_coinbase = true`.
pub fn block_content_bytes(block: &Block, include_coinbase: bool) -> Vec<u8> {
    let mut w = Writer::with_capacity(128 + block.transactions().len() * 180);
    write_block_content(&mut w, block, include_coinbase);
    w.into_inner()
}

pub fn encode_block(block: &Block) -> Vec<u8> {
    let mut w = Writer::with_capacity(256 + block.transactions().len() * 180);
    write_block_content(&mut w, block, true);
    w.len(block.witness_sigs().len());
    for ws in block.witness_sigs() {
        w.node(&ws.witness);
        w.signature(&ws.signature);
    }
    w.into_inner()
}

pub fn decode_block(bytes: &[u8]) -> Result<Block, CodecError> {
    let mut r = Reader { data: bytes };
    r.tag()?;
    let parent_hash = r.u256()?;
    let height = r.u64()?;
    let proposer = r.node()?;
    let n_tx = r.count(4)?;
    let mut txs = Vec::with_capacity(n_tx);
    for _ in 0..n_tx {
        let len = r.u32()? as usize;
        txs.push(decode_transaction(r.take(len)?)?);
    }
    let n_sig = r.count(33)?;
    let mut sigs = Vec::with_capacity(n_sig);
    for _ in 0..n_sig {
        sigs.push(WitnessSignature {
            witness: r.node()?,
            signature: r.signature()?,
        });
    }
    r.finish()?;
    Ok(Block::new(parent_hash, height, proposer, txs).with_witness_sigs(sigs))
}

pub(crate) fn genesis_commitment_bytes(config: &ChainConfig, alloc: &GenesisAlloc) -> Vec<u8> {
    let mut w = Writer::default();
    w.u8(FORMAT_TAG);
    w.bytes(b"genesis");
    w.u32(config.tx_count_min);
    w.u32(config.witness_m);
    w.u32(config.confirm_depth);
    w.u256(&config.witness_threshold);
    w.u8(match config.sig_scheme {
        SigScheme::Ed25519 => 0,
        SigScheme::KeyedHash => 1,
    });
    w.len(alloc.accounts.len());
    for (owner, amount) in &alloc.accounts {
        w.node(owner);
        w.u64(*amount);
    }
    w.outputs(&alloc.utxos);
    w.into_inner()
}
