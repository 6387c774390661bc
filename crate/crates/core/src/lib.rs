//! Simulation of a hybrid proof-of-work / proof-of-stake consensus protocol
//! with exact virtual-stake accounting.

pub mod adversary;
pub mod baselines;
pub mod epoch;
pub mod exp;
pub mod ledger;
pub mod lottery;
pub mod netsim;
pub mod node;
pub mod params;
pub mod rules;
pub mod stake;
