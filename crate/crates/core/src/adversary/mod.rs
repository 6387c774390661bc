//! Scripted Byzantine strategies.

pub mod long_range;
pub mod private;
pub mod selfish;
pub mod spam;

use std::sync::Arc;

use crate::epoch::Setup;
use crate::ledger::{Block, PartyId, Slot};
use crate::netsim::AdversaryIo;
use crate::node::{Message, Node, NodeConfig};
use crate::params::ProtocolParams;
use crate::rules::SelectionRule;
use crate::stake::StakeDistribution;

pub use long_range::{long_range_attack, LongRangeConfig, LongRangeOutcome};
pub use private::{private_chain_attack, PrivateChainConfig, PrivateChainOutcome};
pub use selfish::{selfish_mining, SelfishConfig, SelfishOutcome};
pub use spam::{spammer, SpamConfig, SpamOutcome};

pub const ATTACKER: PartyId = PartyId(1000);

/// Stake roster: `honest` equal honest stakeholders sharing `1 − beta_s`, and
/// the attacker holding `beta_s`.
pub fn roster(honest: u32, beta_s: f64) -> StakeDistribution {
    let each = (1.0 - beta_s) / honest as f64;
    StakeDistribution::from_f64((0..honest).map(|i| (PartyId(i), each)).chain(std::iter::once((ATTACKER, beta_s)))).expect("non-negative stake")
}

pub fn attack_setup(params: ProtocolParams, seed: u64, honest: u32, beta_s: f64, total_queries: u64) -> Arc<Setup> {
    Arc::new(Setup::new(params, seed, roster(honest, beta_s), total_queries.max(1) as f64))
}

/// An adversarial full node that follows the protocol until it goes private,
/// after which it stops listening and withholds what it produces.
#[derive(Clone, Debug)]
pub struct Shadow {
    pub node: Node,
    pub private: bool,
    pub withheld: Vec<Block>,
}

impl Shadow {
    pub fn new(setup: Arc<Setup>, rule: SelectionRule) -> Shadow {
        let mut cfg = NodeConfig::new(ATTACKER, rule);
        cfg.easiest_target = true;
        Shadow { node: Node::new(setup, cfg), private: false, withheld: Vec::new() }
    }

    pub fn observe(&mut self, slot: Slot, block: &Block) {
        if !self.private {
            self.node.on_receive(&Message::Block(block.clone()), slot);
        }
    }

    /// Mines with the whole budget and runs the leader lottery. Blocks are
    /// released at once while honest, otherwise withheld.
    pub fn act(&mut self, io: &mut AdversaryIo<'_>) -> Vec<Block> {
        let queries = io.take_queries();
        let mut produced: Vec<Block> = self.node.miner_step(io.slot, queries).into_iter().map(Block::from).collect();
        produced.extend(self.node.staker_step(io.slot).map(Block::from));
        for b in &produced {
            io.record_mined(b);
            if self.private {
                self.withheld.push(b.clone());
            } else {
                io.release(b.clone(), io.setup.params.delta_net, 0.0);
            }
        }
        produced
    }

    /// Releases every withheld block, dependencies first.
    pub fn release_all(&mut self, io: &mut AdversaryIo<'_>, delay: u64) {
        for b in std::mem::take(&mut self.withheld) {
            io.release(b, delay, 0.0);
        }
    }
}
