use serde::{Deserialize, Serialize};

use super::{attack_setup, Shadow};
use crate::ledger::{Block, PartyId, Slot};
use crate::netsim::{Adversary, AdversaryIo, Scenario, Sim};
use crate::node::NodeConfig;
use crate::params::{ParticipationSchedule, ProtocolParams};
use crate::rules::SelectionRule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivateChainConfig {
    pub beta_s: f64,
    pub beta_w: f64,
    pub omega: f64,
    pub epoch_len: u64,
    pub kappa: u64,
    pub f_s: f64,
    pub f_w: f64,
    pub total_queries: u64,
    pub honest_nodes: u32,
    /// Epochs of honest participation before the attack epoch.
    pub warmup_epochs: u64,
    pub seed: u64,
}

impl Default for PrivateChainConfig {
    fn default() -> Self {
        PrivateChainConfig {
            beta_s: 0.0,
            beta_w: 0.0,
            omega: 0.5,
            epoch_len: 800,
            kappa: 20,
            f_s: 0.05,
            f_w: 0.085,
            total_queries: 100,
            honest_nodes: 2,
            warmup_epochs: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PrivateChainOutcome {
    /// Longest private chain (blocks after the fork) that reached the honest height.
    pub longest: u64,
    pub private_blocks: u64,
    pub honest_growth: u64,
}

/// Behaves honestly during warm-up, then forks at its tip and mines and stakes
/// only on the private branch for one epoch.
pub struct PrivateChainAttacker {
    shadow: Shadow,
    start: Slot,
    end: Slot,
    fork_height: u32,
    honest_at_fork: u32,
    outcome: PrivateChainOutcome,
}

impl PrivateChainAttacker {
    pub fn outcome(&self) -> PrivateChainOutcome {
        self.outcome
    }
}

impl Adversary for PrivateChainAttacker {
    fn observe(&mut self, slot: Slot, block: &Block) {
        self.shadow.observe(slot, block);
    }

    fn step(&mut self, io: &mut AdversaryIo<'_>) {
        if io.slot > self.end {
            io.take_queries();
            return;
        }
        let honest = io.nodes.iter().map(|n| n.chain_len()).max().unwrap_or(0);
        if io.slot == self.start {
            self.shadow.private = true;
            self.fork_height = self.shadow.node.chain_len();
            self.honest_at_fork = honest;
        }
        self.shadow.act(io);
        if self.shadow.private {
            let private = self.shadow.node.chain_len();
            let length = u64::from(private - self.fork_height);
            self.outcome.private_blocks = length;
            self.outcome.honest_growth = u64::from(honest.saturating_sub(self.honest_at_fork));
            if length > 0 && private >= honest {
                self.outcome.longest = self.outcome.longest.max(length);
            }
        }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Runs one private-chain attack: warm-up, then one attack epoch.
pub fn private_chain_attack(cfg: &PrivateChainConfig) -> PrivateChainOutcome {
    let epochs = cfg.warmup_epochs + 1;
    let mut params = ProtocolParams::with_defaults(cfg.epoch_len, cfg.kappa, 1, cfg.f_w, cfg.f_s, cfg.omega, epochs);
    params.k_cp = cfg.kappa;
    let setup = attack_setup(params, cfg.seed, cfg.honest_nodes, cfg.beta_s, cfg.total_queries);
    let rule = SelectionRule::Mc { k: cfg.kappa as u32 };
    let nodes = (0..cfg.honest_nodes).map(|i| NodeConfig::new(PartyId(i), rule)).collect();
    let slots = (epochs * cfg.epoch_len) as usize;
    let adversarial = (cfg.beta_w * cfg.total_queries as f64).round() as u64;
    let participation = ParticipationSchedule::constant(slots, cfg.total_queries - adversarial, cfg.total_queries);
    let scenario = Scenario::honest(setup.clone(), nodes, participation, cfg.seed);
    let start = cfg.warmup_epochs * cfg.epoch_len + 1;
    let attacker = PrivateChainAttacker {
        shadow: Shadow::new(setup, rule),
        start,
        end: start + cfg.epoch_len - 1,
        fork_height: 0,
        honest_at_fork: 0,
        outcome: PrivateChainOutcome::default(),
    };
    let sim = Sim::new(scenario).expect("valid scenario").with_adversary(Box::new(attacker)).run();
    sim.adversary().and_then(|a| a.as_any().downcast_ref::<PrivateChainAttacker>()).map(|a| a.outcome()).expect("attacker present")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_resources_no_chain() {
        let out = private_chain_attack(&PrivateChainConfig { epoch_len: 300, kappa: 10, ..Default::default() });
        assert_eq!(out.longest, 0);
        assert_eq!(out.private_blocks, 0);
        assert!(out.honest_growth > 5);
    }

    #[test]
    fn majority_overtakes() {
        let out = private_chain_attack(&PrivateChainConfig { beta_s: 0.8, beta_w: 0.8, epoch_len: 300, kappa: 10, seed: 4, ..Default::default() });
        assert!(out.longest >= out.honest_growth, "{out:?}");
        assert!(out.longest > 5, "{out:?}");
    }
}
