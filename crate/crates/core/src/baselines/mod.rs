//! Comparison protocols: Bitcoin, FruitChain, pure PoS and the static hybrid.

pub mod hybrid;
pub mod powchain;
pub mod pure_pos;

use serde::{Deserialize, Serialize};

pub use hybrid::{static_hybrid, StaticHybridConfig, StaticHybridOutcome};
pub use powchain::{powchain_selfish, run_powchain, PowChainConfig, PowChainKind, PowChainOutcome, PowChainParams, PowTree};
pub use pure_pos::{pure_pos_params, pure_pos_scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Bitcoin,
    Fruitchain,
    PurePos,
    StaticHybrid,
}
