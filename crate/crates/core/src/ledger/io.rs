//! Chain files: `CBCH`, the format tag, a `u64` block count, then each
//! block as a `u32` length followed by its canonical encoding. Genesis is
//! not stored; it is rebuilt from the configuration and allocation.

use std::io::{Read, Write};

use serde::Serialize;

use super::chain::{ChainState, RejectReason};
use crate::codec::{decode_block, encode_block, FORMAT_TAG};
use crate::error::CodecError;
use crate::scoring::BlockScore;
use crate::types::{Block, BlockHash, NodeId};

pub const CHAIN_MAGIC: [u8; 4] = *b"CBCH";

/// Writes blocks in the given order.
pub fn write_blocks<'a, W: Write>(
    mut out: W,
    blocks: impl ExactSizeIterator<Item = &'a Block>,
) -> Result<(), CodecError> {
    out.write_all(&CHAIN_MAGIC)?;
    out.write_all(&[FORMAT_TAG])?;
    out.write_all(&(blocks.len() as u64).to_be_bytes())?;
    for b in blocks {
        let bytes = encode_block(b);
        out.write_all(&(bytes.len() as u32).to_be_bytes())?;
        out.write_all(&bytes)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the main chain without genesis.
pub fn write_main_chain<W: Write>(out: W, chain: &ChainState) -> Result<(), CodecError> {
    let blocks: Vec<&Block> = chain.main_chain_blocks().skip(1).map(|b| &**b).collect();
    write_blocks(out, blocks.into_iter())
}

pub fn read_blocks<R: Read>(mut input: R) -> Result<Vec<Block>, CodecError> {
    let mut head = [0u8; 5];
    read_exact(&mut input, &mut head)?;
    if head[..4] != CHAIN_MAGIC {
        return Err(CodecError::Magic);
    }
    if head[4] != FORMAT_TAG {
        return Err(CodecError::FormatTag(head[4]));
    }
    let mut n = [0u8; 8];
    read_exact(&mut input, &mut n)?;
    let count = u64::from_be_bytes(n);
    let mut blocks = Vec::new();
    for _ in 0..count {
        let mut len = [0u8; 4];
        read_exact(&mut input, &mut len)?;
        let len = u64::from(u32::from_be_bytes(len));
        let mut buf = Vec::new();
        (&mut input).take(len).read_to_end(&mut buf)?;
        if buf.len() as u64 != len {
            return Err(CodecError::Truncated);
        }
        blocks.push(decode_block(&buf)?);
    }
    let mut rest = [0u8; 1];
    match input.read(&mut rest)? {
        0 => Ok(blocks),
        _ => Err(CodecError::TrailingBytes(1)),
    }
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<(), CodecError> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CodecError::Truncated,
        _ => CodecError::from(e),
    })
}

/// Feeds blocks into `chain` in order, stopping at the first rejection.
pub fn load_blocks(
    chain: &mut ChainState,
    blocks: Vec<Block>,
) -> Result<(), (BlockHash, RejectReason)> {
    for b in blocks {
        let hash = b.block_hash();
        chain.apply_block(b).map_err(|r| (hash, r))?;
    }
    Ok(())
}

#[derive(Serialize)]
pub struct BlockSummary {
    pub height: u64,
    pub block_hash: BlockHash,
    pub parent_hash: BlockHash,
    pub proposer: NodeId,
    pub score: BlockScore,
    pub tx_count: usize,
    pub witnesses: Vec<NodeId>,
    pub confirmed: bool,
}

/// Human-readable summary of the main chain.
pub fn main_chain_summary(chain: &ChainState) -> Vec<BlockSummary> {
    let confirmed = chain.confirmed_height();
    chain
        .main_chain()
        .iter()
        .map(|h| {
            let b = chain.block(h).expect("main chain blocks are stored");
            BlockSummary {
                height: b.height(),
                block_hash: *h,
                parent_hash: b.parent_hash(),
                proposer: *b.proposer(),
                score: chain.score_of(h).expect("stored"),
                tx_count: b.transactions().len(),
                witnesses: b.witness_sigs().iter().map(|w| w.witness).collect(),
                confirmed: b.height() <= confirmed,
            }
        })
        .collect()
}
