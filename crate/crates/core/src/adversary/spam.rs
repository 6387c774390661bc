use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::epoch::Setup;
use crate::ledger::{PartyId, Slot, Transaction};
use crate::netsim::{DelayPolicy, Scenario, Sim, Topology};
use crate::node::NodeConfig;
use crate::params::{ParticipationSchedule, ProtocolParams};
use crate::rules::{normalized_spam, SelectionRule};
use crate::stake::StakeDistribution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpamConfig {
    pub filtered: bool,
    /// Extra latency per line edge, in slots.
    pub extra_latency: u64,
    /// Whether the two line ends receive conflicting streams.
    pub inject_conflicts: bool,
    pub epoch_len: u64,
    pub kappa: u64,
    pub f_s: f64,
    pub f_w: f64,
    pub queries_per_node: u64,
    pub epochs: u64,
    /// Slots between transaction rounds.
    pub period: u64,
    /// Last slot with new transactions.
    pub stop_at: Slot,
    pub sample_every: Slot,
    pub seed: u64,
}

impl Default for SpamConfig {
    fn default() -> Self {
        SpamConfig {
            filtered: false,
            extra_latency: 0,
            inject_conflicts: true,
            epoch_len: 1000,
            kappa: 20,
            f_s: 0.2,
            f_w: 0.2,
            queries_per_node: 10,
            epochs: 3,
            period: 5,
            stop_at: 2000,
            sample_every: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpamOutcome {
    pub normalized_spam: f64,
    pub ledger_len: usize,
    pub injected: usize,
    /// `(slot, normalized spam of node 0's confirmed ledger)`.
    pub trajectory: Vec<(Slot, f64)>,
}

const LINE: usize = 4;

/// Each round hands every node of a 4-node line its own transaction; the two
/// ends receive transactions sharing `(sender, nonce)`. Transactions are not
/// gossiped, so conflicts surface only through mined PoW blocks.
pub fn spam_scenario(cfg: &SpamConfig) -> Scenario {
    let mut params = ProtocolParams::with_defaults(cfg.epoch_len, cfg.kappa, 1, cfg.f_w, cfg.f_s, 0.5, cfg.epochs);
    params.k_cp = cfg.kappa;
    let total = cfg.queries_per_node * LINE as u64;
    let stake = StakeDistribution::from_f64((0..LINE as u32).map(|i| (PartyId(i), 1.0))).expect("positive stake");
    let setup = Arc::new(Setup::new(params, cfg.seed, stake, total as f64));
    let nodes =
        (0..LINE as u32).map(|i| NodeConfig { spam_filter: cfg.filtered, ..NodeConfig::new(PartyId(i), SelectionRule::Mc { k: cfg.kappa as u32 }) }).collect();
    let slots = (cfg.epochs * cfg.epoch_len) as usize;
    let mut scenario = Scenario::honest(setup, nodes, ParticipationSchedule::constant(slots, total, total), cfg.seed);
    scenario.topology = Topology::line(LINE, cfg.extra_latency);
    scenario.delay = DelayPolicy::Max;
    scenario.gossip_txs = false;
    let mut injections: BTreeMap<Slot, Vec<(Option<usize>, Transaction)>> = BTreeMap::new();
    let mut round = 0;
    let mut slot = 1;
    while slot <= cfg.stop_at {
        let txs = injections.entry(slot).or_default();
        let (left, right) = if cfg.inject_conflicts { (PartyId(500), PartyId(500)) } else { (PartyId(500), PartyId(503)) };
        txs.push((Some(0), Transaction::new(left, round, *b"left")));
        txs.push((Some(1), Transaction::new(PartyId(501), round, *b"middle")));
        txs.push((Some(2), Transaction::new(PartyId(502), round, *b"middle")));
        txs.push((Some(3), Transaction::new(right, round, *b"right")));
        round += 1;
        slot += cfg.period;
    }
    scenario.injections = injections;
    scenario
}

/// Runs the line scenario and reports node 0's normalized spam over time.
pub fn spammer(cfg: &SpamConfig) -> SpamOutcome {
    let scenario = spam_scenario(cfg);
    let injected = scenario.injections.values().map(Vec::len).sum();
    let slots = scenario.slots;
    let mut sim = Sim::new(scenario).expect("valid scenario");
    let mut out = SpamOutcome { injected, ..Default::default() };
    while sim.slot() < slots {
        sim.step();
        if sim.slot().is_multiple_of(cfg.sample_every) || sim.slot() == slots {
            out.trajectory.push((sim.slot(), normalized_spam(&sim.nodes[0].confirmed_ledger(sim.slot()))));
        }
    }
    let ledger = sim.nodes[0].confirmed_ledger(slots);
    out.normalized_spam = normalized_spam(&ledger);
    out.ledger_len = ledger.len();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(filtered: bool, inject_conflicts: bool) -> SpamConfig {
        SpamConfig { filtered, inject_conflicts, epoch_len: 300, epochs: 3, stop_at: 500, seed: 3, ..Default::default() }
    }

    #[test]
    fn unfiltered_spam_is_a_quarter() {
        let out = spammer(&small(false, true));
        assert!(out.ledger_len + 10 >= out.injected);
        assert!((out.normalized_spam - 0.25).abs() < 0.01, "{out:?}");
    }

    #[test]
    fn filter_reduces_spam() {
        let out = spammer(&small(true, true));
        assert!(out.normalized_spam < spammer(&small(false, true)).normalized_spam, "{}", out.normalized_spam);
        assert_eq!(spammer(&small(true, false)).normalized_spam, 0.0);
    }
}
