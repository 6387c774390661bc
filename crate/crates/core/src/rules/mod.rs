//! Block validation, chain selection, the confirmation rule and property monitors.

pub mod ledger;
pub mod monitor;
pub mod select;
pub mod validate;

pub use ledger::{confirmed_ledger, normalized_spam, Ledger, LedgerEntry};
pub use monitor::{monitor_cp, monitor_ecq, monitor_freshness, monitor_liveness, MonitorLog, Property, Violation};
pub use select::{maxvalid_bg, maxvalid_mc, SelectionRule};
pub use validate::{validate_pos_block, validate_pow_block, Invalid};
