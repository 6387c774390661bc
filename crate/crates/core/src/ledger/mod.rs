//! Block types, the block DAG store and chain algebra.

pub mod block;
pub mod chain;
pub mod digest;
pub mod store;

pub use block::{Block, EpochIndex, Party, PartyId, PosBlock, PowBlock, Roles, Slot, Target, Transaction};
pub use chain::{Chain, ChainError};
pub use digest::{DecodeError, Digest};
pub use store::{BlockStore, InsertOutcome, InsertStatus, PosIdx, GENESIS_IDX};
