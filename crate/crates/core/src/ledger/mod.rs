//! Transaction index, block tree and fork choice.

mod chain;
mod index;
pub mod io;

pub use chain::{
    ApplyOutcome, ChainState, ForkDecision, ForkSwitch, ForkWinMsg, ForkWinOutcome, OrphanPolicy,
    RejectReason, WitnessFault,
};
pub(crate) use index::execute_transaction;
pub use index::{check_transaction, StateView, TxIndex, TxInvalid};
