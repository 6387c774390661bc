use serde::{Deserialize, Serialize};

use super::{attack_setup, Shadow};
use crate::ledger::{Block, Digest, PartyId, Slot};
use crate::netsim::{Adversary, AdversaryIo, Scenario, Sim};
use crate::node::NodeConfig;
use crate::params::{ParticipationSchedule, ProtocolParams};
use crate::rules::SelectionRule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRangeConfig {
    pub beta_s: f64,
    pub beta_w: f64,
    pub omega: f64,
    pub epoch_len: u64,
    pub kappa: u64,
    pub f_s: f64,
    pub f_w: f64,
    /// Rollback bound of both rules.
    pub k: u32,
    /// Density window of maxvalid-bg.
    pub s: u64,
    pub epochs: u64,
    pub attack_epoch: u64,
    pub total_queries: u64,
    pub seed: u64,
}

impl Default for LongRangeConfig {
    fn default() -> Self {
        LongRangeConfig {
            beta_s: 0.8,
            beta_w: 0.1,
            omega: 0.5,
            epoch_len: 5000,
            kappa: 40,
            f_s: 0.5,
            f_w: 0.2,
            k: 1500,
            s: 4000,
            epochs: 7,
            attack_epoch: 3,
            total_queries: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LongRangeOutcome {
    pub adopted_mc: bool,
    pub adopted_bg: bool,
    /// First slot the longest-chain observer held the attacker's chain.
    pub overtake_slot: Option<Slot>,
    pub released_from: Option<Slot>,
    pub private_height: u32,
    pub honest_height: u32,
}

/// Forks at the start of the attack epoch and grows a private chain that
/// references only its own work. Once that chain is longer than the honest
/// one and the honest side has moved more than `k` blocks past the fork, every
/// block is released as soon as it is made.
pub struct LongRangeAttacker {
    shadow: Shadow,
    start: Slot,
    k: u32,
    fork_height: u32,
    first_private: Option<Digest>,
    released_from: Option<Slot>,
}

impl Adversary for LongRangeAttacker {
    fn observe(&mut self, slot: Slot, block: &Block) {
        self.shadow.observe(slot, block);
    }

    fn step(&mut self, io: &mut AdversaryIo<'_>) {
        if io.slot == self.start {
            self.shadow.private = true;
            self.fork_height = self.shadow.node.chain_len();
        }
        self.shadow.act(io);
        if !self.shadow.private {
            return;
        }
        if self.first_private.is_none() {
            self.first_private = self.shadow.withheld.iter().find_map(|b| matches!(b, Block::Pos(_)).then(|| b.id()));
        }
        let honest = io.nodes.iter().map(|n| n.chain_len()).max().unwrap_or(0);
        let ready = self.shadow.node.chain_len() > honest && honest > self.fork_height + self.k;
        if ready && self.released_from.is_none() {
            self.released_from = Some(io.slot);
        }
        if self.released_from.is_some() {
            self.shadow.release_all(io, 1);
        }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Runs the long-range scenario with two mc and two bg honest nodes plus a
/// longest-chain observer.
pub fn long_range_attack(cfg: &LongRangeConfig) -> LongRangeOutcome {
    let mut params = ProtocolParams::with_defaults(cfg.epoch_len, cfg.kappa, 1, cfg.f_w, cfg.f_s, cfg.omega, cfg.epochs);
    params.k_cp = u64::from(cfg.k);
    params.s_bg = cfg.s;
    let setup = attack_setup(params, cfg.seed, 4, cfg.beta_s, cfg.total_queries);
    let mc = SelectionRule::Mc { k: cfg.k };
    let bg = SelectionRule::Bg { k: cfg.k, s: cfg.s };
    let nodes = vec![NodeConfig::new(PartyId(0), mc), NodeConfig::new(PartyId(1), mc), NodeConfig::new(PartyId(2), bg), NodeConfig::new(PartyId(3), bg)];
    let slots = (cfg.epochs * cfg.epoch_len) as usize;
    let adversarial = (cfg.beta_w * cfg.total_queries as f64).round() as u64;
    let participation = ParticipationSchedule::constant(slots, cfg.total_queries - adversarial, cfg.total_queries);
    let mut scenario = Scenario::honest(setup.clone(), nodes, participation, cfg.seed);
    scenario.observers = vec![SelectionRule::Longest];
    let attacker = LongRangeAttacker {
        shadow: Shadow::new(setup, mc),
        start: (cfg.attack_epoch - 1) * cfg.epoch_len + 1,
        k: cfg.k,
        fork_height: 0,
        first_private: None,
        released_from: None,
    };
    let sim = Sim::new(scenario).expect("valid scenario").with_adversary(Box::new(attacker)).run();
    let a = sim.adversary().and_then(|a| a.as_any().downcast_ref::<LongRangeAttacker>()).expect("attacker present");
    let mut out = LongRangeOutcome {
        released_from: a.released_from,
        private_height: a.shadow.node.chain_len(),
        honest_height: sim.nodes.iter().map(|n| n.chain_len()).max().unwrap_or(0),
        ..Default::default()
    };
    let Some(root) = a.first_private.and_then(|id| sim.global.pos_idx(&id)) else {
        return out;
    };
    for (r, tips) in sim.trace.log.tips.iter().enumerate() {
        for (i, &t) in tips.iter().enumerate() {
            if sim.global.is_ancestor(root, t) {
                match sim.nodes[i].cfg.rule {
                    SelectionRule::Bg { .. } => out.adopted_bg = true,
                    _ => out.adopted_mc = true,
                }
            }
        }
        if out.overtake_slot.is_none() && sim.trace.observer_tips[r].iter().any(|&t| sim.global.is_ancestor(root, t)) {
            out.overtake_slot = Some(r as Slot + 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_scale_attack_is_refused_but_overtakes() {
        let cfg = LongRangeConfig { epoch_len: 600, kappa: 10, k: 150, s: 400, epochs: 7, seed: 1, ..Default::default() };
        let out = long_range_attack(&cfg);
        assert!(!out.adopted_mc && !out.adopted_bg, "{out:?}");
        assert!(out.overtake_slot.is_some(), "{out:?}");
    }
}
