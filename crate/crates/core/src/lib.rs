//! Consensusless blockchain: witnessed blocks, score-based fork choice and a
//! discrete-event network simulator.

pub mod analysis;
pub mod codec;
pub mod crypto;
pub mod error;
pub mod incentive;
pub mod ledger;
pub mod scoring;
pub mod simnet;
pub mod stats;
pub mod testkit;
pub mod types;
pub mod witness;

pub use crypto::{hash256, Keypair, SigScheme, Signature};
pub use error::{CodecError, ConfigError};
pub use incentive::{MintHooks, RewardSchedule};
pub use ledger::{ApplyOutcome, ChainState, ForkWinMsg, RejectReason, TxIndex, TxInvalid};
pub use scoring::{block_score, compare_blocks, BlockOrdering, BlockScore};
pub use types::{
    Block, BlockHash, ChainConfig, GenesisAlloc, NodeId, OutPoint, Transaction, TxBody, TxId,
    TxModel, TxOutput, WitnessSignature, U256,
};
pub use witness::{is_eligible_witness, mint_block, propose_block, sign_witness, WitnessRequest};
