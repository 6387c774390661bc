//! Deterministic slot-driven network simulation.

pub mod network;
pub mod sim;
pub mod trace;

pub use network::{DelayPolicy, Network, Priority, Topology};
pub use sim::{split_queries, Adversary, AdversaryIo, Scenario, Sim, SimError};
pub use trace::{BlockKind, MinedRecord, Trace};
