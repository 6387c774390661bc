use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::network::{DelayPolicy, Envelope, Network, Priority, Topology};
use super::trace::{MinedRecord, Trace};
use crate::epoch::{Setup, SlotMining};
use crate::ledger::{Block, BlockStore, Slot, Transaction};
use crate::lottery::OracleBudget;
use crate::node::{Message, Node, NodeConfig, Received};
use crate::params::{ParamError, ParticipationSchedule};
use crate::rules::SelectionRule;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Schedule(#[from] ParamError),
    #[error("participation schedule covers {have} slots, run needs {need}")]
    ScheduleTooShort { have: usize, need: u64 },
    #[error("{0} nodes exceed the 64-node limit")]
    TooManyNodes(usize),
    #[error("topology has {topology} nodes, scenario has {nodes}")]
    TopologyMismatch { topology: usize, nodes: usize },
    #[error("{weights} mining weights for {nodes} nodes")]
    WeightMismatch { weights: usize, nodes: usize },
}

/// Everything that determines one run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub setup: Arc<Setup>,
    pub nodes: Vec<NodeConfig>,
    /// Relative share of the honest queries each node receives.
    pub mining_weights: Vec<u64>,
    pub participation: ParticipationSchedule,
    /// Nodes whose mined difficulty is tallied as the tagged subset.
    pub subset: Vec<bool>,
    pub topology: Topology,
    pub delay: DelayPolicy,
    pub seed: u64,
    pub slots: Slot,
    /// Counterfactual selectors fed every block, never broadcasting.
    pub observers: Vec<SelectionRule>,
    /// Transactions to hand out per slot; `None` targets every node.
    pub injections: BTreeMap<Slot, Vec<(Option<usize>, Transaction)>>,
    pub gossip_txs: bool,
}

impl Scenario {
    /// Full mesh, every node mining with equal weight, fixed delay Δ.
    pub fn honest(setup: Arc<Setup>, nodes: Vec<NodeConfig>, participation: ParticipationSchedule, seed: u64) -> Scenario {
        let n = nodes.len();
        Scenario {
            slots: setup.params.total_slots(),
            delay: DelayPolicy::Max,
            setup,
            mining_weights: vec![1; n],
            participation,
            subset: vec![false; n],
            topology: Topology::full_mesh(n),
            seed,
            nodes,
            observers: Vec::new(),
            injections: BTreeMap::new(),
            gossip_txs: true,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.nodes.len();
        if n > 64 {
            return Err(SimError::TooManyNodes(n));
        }
        if self.topology.len() != n {
            return Err(SimError::TopologyMismatch { topology: self.topology.len(), nodes: n });
        }
        if self.mining_weights.len() != n || self.subset.len() != n {
            return Err(SimError::WeightMismatch { weights: self.mining_weights.len(), nodes: n });
        }
        if (self.participation.len() as u64) < self.slots {
            return Err(SimError::ScheduleTooShort { have: self.participation.len(), need: self.slots });
        }
        self.participation.check(None)?;
        Ok(())
    }
}

/// Splits `total` queries by `weights`; the remainder goes to the first miners.
pub fn split_queries(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u64 = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut q: Vec<u64> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rest = total - q.iter().sum::<u64>();
    for (qi, &w) in q.iter_mut().zip(weights) {
        if rest == 0 {
            break;
        }
        if w > 0 {
            *qi += 1;
            rest -= 1;
        }
    }
    q
}

/// What an adversary may do during its turn.
pub struct AdversaryIo<'a> {
    pub slot: Slot,
    pub nodes: &'a [Node],
    pub global: &'a BlockStore,
    pub setup: &'a Arc<Setup>,
    net: &'a mut Network,
    budget: &'a mut OracleBudget,
    mining: &'a mut SlotMining,
    mined: &'a mut Vec<MinedRecord>,
    released: &'a mut Vec<Block>,
}

impl AdversaryIo<'_> {
    /// Takes every query accumulated in the budget.
    pub fn take_queries(&mut self) -> u64 {
        self.budget.take_all()
    }

    pub fn record_mined(&mut self, block: &Block) {
        if let Block::Pow(w) = block {
            self.mining.adversarial_difficulty += w.difficulty();
        }
        self.mined.push(MinedRecord::new(self.slot, block, false));
    }

    /// Sends `block` to every honest node after `delay` slots (at most Δ). Each
    /// recipient sees it ahead of same-slot honest messages with probability `p_early`.
    pub fn release(&mut self, block: Block, delay: u64, p_early: f64) {
        use rand::Rng;
        let due = self.slot + delay.min(self.net.delta);
        for to in 0..self.nodes.len() {
            let priority = if p_early >= 1.0 || self.net.rng().gen_bool(p_early.clamp(0.0, 1.0)) { Priority::Early } else { Priority::Late };
            self.net.push(due, priority, Envelope { to, msg: Message::Block(block.clone()), served: u64::MAX });
        }
        self.released.push(block);
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.net.rng()
    }
}

/// Scripted Byzantine party driven once per slot after the honest parties.
pub trait Adversary {
    /// Sees each honest block as it is broadcast.
    fn observe(&mut self, _slot: Slot, _block: &Block) {}
    fn step(&mut self, io: &mut AdversaryIo<'_>);
    fn as_any(&self) -> &dyn std::any::Any;
}

pub struct Sim {
    pub scenario: Scenario,
    pub nodes: Vec<Node>,
    pub observers: Vec<Node>,
    pub global: BlockStore,
    pub trace: Trace,
    net: Network,
    budget: OracleBudget,
    adversary: Option<Box<dyn Adversary>>,
    slot: Slot,
}

impl Sim {
    pub fn new(scenario: Scenario) -> Result<Sim, SimError> {
        scenario.validate()?;
        let setup = scenario.setup.clone();
        let nodes: Vec<Node> = scenario.nodes.iter().map(|c| Node::new(setup.clone(), c.clone())).collect();
        let observers = scenario
            .observers
            .iter()
            .map(|&rule| {
                let mut cfg = NodeConfig::new(crate::ledger::PartyId(u32::MAX - 1), rule);
                cfg.stakeholder = false;
                Node::new(setup.clone(), cfg)
            })
            .collect();
        let trace = Trace { honest: scenario.nodes.iter().map(|c| c.id).collect(), ..Trace::default() };
        Ok(Sim {
            net: Network::new(scenario.topology.clone(), setup.params.delta_net, scenario.delay, scenario.seed),
            global: BlockStore::new((*setup.genesis).clone()),
            budget: OracleBudget::default(),
            scenario,
            nodes,
            observers,
            trace,
            adversary: None,
            slot: 0,
        })
    }

    pub fn with_adversary(mut self, adversary: Box<dyn Adversary>) -> Sim {
        self.adversary = Some(adversary);
        self
    }

    pub fn slot(&self) -> Slot {
        self.slot
    }

    pub fn set_delay_policy(&mut self, policy: DelayPolicy) {
        self.net.set_delay_policy(policy);
    }

    pub fn run(mut self) -> Sim {
        while self.slot < self.scenario.slots {
            self.step();
        }
        self
    }

    pub fn adversary(&self) -> Option<&dyn Adversary> {
        self.adversary.as_deref()
    }

    pub fn into_adversary(self) -> Option<Box<dyn Adversary>> {
        self.adversary
    }

    fn publish(&mut self, block: &Block) {
        self.global.insert_block(block.clone());
        for o in &mut self.observers {
            o.on_receive(&Message::Block(block.clone()), self.slot);
        }
    }

    fn deliver(&mut self) {
        while let Some(env) = self.net.next_due(self.slot) {
            if let Received::Accepted(relay) = self.nodes[env.to].on_receive(&env.msg, self.slot) {
                for m in relay {
                    if matches!(m, Message::Tx(_)) && !self.scenario.gossip_txs {
                        continue;
                    }
                    self.net.broadcast(env.to, &m, self.slot, env.served);
                }
            }
        }
    }

    pub fn step(&mut self) {
        self.slot += 1;
        let slot = self.slot;
        self.deliver();

        if let Some(txs) = self.scenario.injections.get(&slot).cloned() {
            for (to, tx) in txs {
                match to {
                    None => {
                        for n in &mut self.nodes {
                            n.submit_tx(tx.clone());
                        }
                        self.trace.delivered_txs.push((tx.id(), slot));
                    }
                    Some(i) => {
                        if self.nodes[i].submit_tx(tx.clone()) && self.scenario.gossip_txs {
                            self.net.broadcast(i, &Message::Tx(tx), slot, 0);
                        }
                    }
                }
            }
        }

        let honest_total = self.scenario.participation.honest_at(slot);
        let queries = split_queries(honest_total, &self.scenario.mining_weights);
        let mut mining =
            SlotMining { honest_queries: honest_total, adversarial_queries: self.scenario.participation.adversarial_at(slot), ..Default::default() };
        for (i, &q) in queries.iter().enumerate() {
            if self.scenario.subset[i] {
                mining.subset_queries += q;
            }
        }
        let mut produced: Vec<(usize, Block)> = Vec::new();
        for (i, &q) in queries.iter().enumerate() {
            for w in self.nodes[i].miner_step(slot, q) {
                mining.honest_difficulty += w.difficulty();
                if self.scenario.subset[i] {
                    mining.subset_difficulty += w.difficulty();
                }
                produced.push((i, Block::from(w)));
            }
            if let Some(b) = self.nodes[i].staker_step(slot) {
                produced.push((i, Block::from(b)));
            }
        }
        for (i, b) in &produced {
            self.trace.mined.push(MinedRecord::new(slot, b, true));
            self.publish(b);
            self.net.broadcast(*i, &Message::Block(b.clone()), slot, 0);
            if let Some(a) = self.adversary.as_mut() {
                a.observe(slot, b);
            }
        }

        self.budget.grant(mining.adversarial_queries);
        if let Some(mut adv) = self.adversary.take() {
            let mut released = Vec::new();
            let mut io = AdversaryIo {
                slot,
                nodes: &self.nodes,
                global: &self.global,
                setup: &self.scenario.setup,
                net: &mut self.net,
                budget: &mut self.budget,
                mining: &mut mining,
                mined: &mut self.trace.mined,
                released: &mut released,
            };
            adv.step(&mut io);
            self.adversary = Some(adv);
            for b in &released {
                self.publish(b);
            }
        }

        self.deliver();
        self.trace.mining.push(mining);
        let tips = self.nodes.iter().map(|n| self.global.pos_idx(&n.tip_block().id).expect("honest tips are published")).collect();
        self.trace.log.record(tips);
        let obs = self.observers.iter().map(|n| self.global.pos_idx(&n.tip_block().id).expect("observer tips are published")).collect();
        self.trace.observer_tips.push(obs);
    }
}
