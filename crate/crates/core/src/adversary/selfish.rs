use serde::{Deserialize, Serialize};

use super::{attack_setup, ATTACKER};
use crate::ledger::{Block, Digest, PartyId, PosIdx, Slot};
use crate::netsim::{Adversary, AdversaryIo, Scenario, Sim};
use crate::node::{mine, NodeConfig, View};
use crate::params::{ParticipationSchedule, ProtocolParams};
use crate::rules::SelectionRule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfishConfig {
    pub beta_w: f64,
    /// Probability an honest node hears the attacker's block first in a tie.
    pub p: f64,
    pub omega: f64,
    /// Attacker virtual share to hold once work stake applies; fixes `beta_s`.
    pub virtual_share: f64,
    pub epoch_len: u64,
    pub kappa: u64,
    pub f_s: f64,
    pub f_w: f64,
    pub total_queries: u64,
    pub honest_nodes: u32,
    pub epochs: u64,
    pub seed: u64,
}

impl Default for SelfishConfig {
    fn default() -> Self {
        SelfishConfig {
            beta_w: 0.25,
            p: 1.0,
            omega: 0.25,
            virtual_share: 1.0 / 3.0,
            epoch_len: 600,
            kappa: 60,
            f_s: 0.2,
            f_w: 1.2,
            total_queries: 100,
            honest_nodes: 10,
            epochs: 3,
            seed: 0,
        }
    }
}

impl SelfishConfig {
    /// Actual stake giving `virtual_share = ω·β_w + (1−ω)·β_s`.
    pub fn beta_s(&self) -> f64 {
        if self.omega >= 1.0 {
            return 0.0;
        }
        ((self.virtual_share - self.omega * self.beta_w) / (1.0 - self.omega)).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SelfishOutcome {
    pub honest_fraction: f64,
    pub honest_refs: u64,
    pub total_refs: u64,
}

/// Withholds its PoS blocks and releases a matching block whenever the honest
/// chain catches up; its PoW blocks are published and its PoS blocks reference
/// only its own work.
pub struct SelfishMiner {
    view: View,
    p: f64,
    private_tip: PosIdx,
    public_tip: PosIdx,
    withheld: Vec<Block>,
    own_pow: Vec<Digest>,
    nonce: u64,
    honest_moved: bool,
}

impl SelfishMiner {
    pub fn new(view: View, p: f64) -> Self {
        SelfishMiner { view, p, private_tip: 0, public_tip: 0, withheld: Vec::new(), own_pow: Vec::new(), nonce: 1 << 50, honest_moved: false }
    }

    fn height(&self, i: PosIdx) -> u32 {
        self.view.store.height(i)
    }

    fn release_through(&mut self, io: &mut AdversaryIo<'_>, height: u32) {
        let store = &self.view.store;
        let (out, keep): (Vec<Block>, Vec<Block>) = std::mem::take(&mut self.withheld).into_iter().partition(|b| match b {
            Block::Pos(p) => store.pos_idx(&p.id).is_some_and(|i| store.height(i) <= height),
            Block::Pow(_) => true,
        });
        self.withheld = keep;
        for b in out {
            io.release(b, io.setup.params.delta_net, self.p);
        }
    }
}

impl Adversary for SelfishMiner {
    fn observe(&mut self, _slot: Slot, block: &Block) {
        let out = self.view.insert(block.clone());
        for b in &out.inserted {
            if let Block::Pos(p) = b {
                let i = self.view.store.pos_idx(&p.id).expect("inserted");
                if self.height(i) > self.height(self.public_tip) {
                    self.public_tip = i;
                    self.honest_moved = true;
                }
            }
        }
    }

    fn step(&mut self, io: &mut AdversaryIo<'_>) {
        let slot = io.slot;
        let mut queries = io.take_queries();
        let anchor = self.view.store.pos(self.view.anchor(self.public_tip, slot)).id;
        let target = self.view.target(self.public_tip, slot);
        let oracle = io.setup.oracle;
        while queries > 0 {
            let (found, used) = mine(&oracle, ATTACKER, slot, anchor, Vec::new(), target, queries, &mut self.nonce);
            queries -= used;
            let Some(w) = found else { break };
            let b = Block::from(w.clone());
            self.view.insert(b.clone());
            io.record_mined(&b);
            io.release(b, io.setup.params.delta_net, 0.0);
            self.own_pow.push(w.id);
        }

        let pool = self.own_pow.clone();
        let (refs, dead) = self.view.select_refs(self.private_tip, slot, pool, None);
        self.own_pow.retain(|id| !dead.contains(id));
        if let Some(b) = self.view.propose(ATTACKER, slot, self.private_tip, refs) {
            let block = Block::from(b.clone());
            self.view.insert(block.clone());
            io.record_mined(&block);
            self.private_tip = self.view.store.pos_idx(&b.id).expect("own block validates");
            self.withheld.push(block);
        }

        let (private, public) = (self.height(self.private_tip), self.height(self.public_tip));
        if private < public {
            self.private_tip = self.public_tip;
            self.withheld.clear();
        } else if self.honest_moved {
            if private <= public + 1 {
                self.release_through(io, u32::MAX);
            } else {
                self.release_through(io, public);
            }
        }
        self.honest_moved = false;
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Fraction of PoW blocks referenced by the final honest chain that honest miners produced.
pub fn selfish_mining(cfg: &SelfishConfig) -> SelfishOutcome {
    let mut params = ProtocolParams::with_defaults(cfg.epoch_len, cfg.kappa, 1, cfg.f_w, cfg.f_s, cfg.omega, cfg.epochs);
    params.k_cp = cfg.kappa;
    let setup = attack_setup(params, cfg.seed, cfg.honest_nodes, cfg.beta_s(), cfg.total_queries);
    let rule = SelectionRule::Mc { k: cfg.kappa as u32 };
    let nodes = (0..cfg.honest_nodes).map(|i| NodeConfig::new(PartyId(i), rule)).collect();
    let slots = (cfg.epochs * cfg.epoch_len) as usize;
    let adversarial = (cfg.beta_w * cfg.total_queries as f64).round() as u64;
    let participation = ParticipationSchedule::constant(slots, cfg.total_queries - adversarial, cfg.total_queries);
    let scenario = Scenario::honest(setup.clone(), nodes, participation, cfg.seed);
    let attacker = SelfishMiner::new(View::new(setup), cfg.p);
    let sim = Sim::new(scenario).expect("valid scenario").with_adversary(Box::new(attacker)).run();
    let node = &sim.nodes[0];
    let store = node.store();
    let mut outcome = SelfishOutcome::default();
    for b in store.chain(node.tip()).blocks() {
        for r in &b.pow_refs {
            outcome.total_refs += 1;
            if store.pow(r).is_some_and(|w| w.miner != ATTACKER) {
                outcome.honest_refs += 1;
            }
        }
    }
    outcome.honest_fraction = if outcome.total_refs == 0 { 0.0 } else { outcome.honest_refs as f64 / outcome.total_refs as f64 };
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_s_pairs() {
        let c = SelfishConfig { beta_w: 0.5, ..Default::default() };
        assert!((c.omega * c.beta_w + (1.0 - c.omega) * c.beta_s() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn honest_fraction_tracks_work_share() {
        let out = selfish_mining(&SelfishConfig { beta_w: 0.5, epoch_len: 300, honest_nodes: 4, seed: 2, ..Default::default() });
        assert!(out.total_refs > 500, "{out:?}");
        assert!((out.honest_fraction - 0.5).abs() < 0.06, "{out:?}");
    }
}
