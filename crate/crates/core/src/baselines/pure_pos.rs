use crate::adversary::roster;
use crate::epoch::Setup;
use crate::ledger::PartyId;
use crate::netsim::Scenario;
use crate::node::NodeConfig;
use crate::params::{ParticipationSchedule, ProtocolParams};
use crate::rules::SelectionRule;
use std::sync::Arc;

/// Minotaur with `ω = 0` and no PoW plane: leaders are drawn from actual stake only.
pub fn pure_pos_params(mut params: ProtocolParams) -> ProtocolParams {
    params.omega = 0.0;
    params
}

/// Honest pure-PoS scenario over `nodes` equal stakeholders.
pub fn pure_pos_scenario(params: ProtocolParams, nodes: u32, rule: SelectionRule, seed: u64) -> Scenario {
    let params = pure_pos_params(params);
    let slots = params.total_slots() as usize;
    let stake = roster(nodes, 0.0);
    let setup = Arc::new(Setup::new(params, seed, stake, 1.0));
    let configs = (0..nodes).map(|i| NodeConfig::new(PartyId(i), rule)).collect();
    Scenario::honest(setup, configs, ParticipationSchedule::constant(slots, 0, 0), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::Sim;

    #[test]
    fn no_pow_blocks_appear() {
        let params = ProtocolParams::with_defaults(300, 10, 1, 0.1, 0.1, 0.7, 3);
        let sim = Sim::new(pure_pos_scenario(params, 3, SelectionRule::Mc { k: 10 }, 4)).unwrap().run();
        let store = sim.nodes[0].store();
        let chain = store.chain(sim.nodes[0].tip());
        assert!(chain.len() > 50);
        assert!(chain.blocks().iter().all(|b| b.pow_refs.is_empty()));
    }
}
