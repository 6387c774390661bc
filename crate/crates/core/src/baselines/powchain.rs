use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::ATTACKER;
use crate::ledger::{Digest, PartyId, Slot, Target};
use crate::lottery::{unit_interval, PowOracle};
use crate::params::ParticipationSchedule;
use crate::rules::{monitor_liveness, Violation};

const HONEST_POOL: PartyId = PartyId(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowChainKind {
    Bitcoin,
    FruitChain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowChainParams {
    pub kind: PowChainKind,
    /// Blocks per difficulty epoch.
    pub epoch_blocks: u64,
    /// Expected slots per difficulty epoch.
    pub epoch_slots: u64,
    pub initial_target: f64,
    /// Per-epoch adjustment bound; `None` leaves retargeting unclamped.
    pub clamp: Option<f64>,
    /// Fruit target as a multiple of the block target.
    pub fruit_ratio: f64,
    /// A fruit is valid in a block at most this many heights above its hang block.
    pub fruit_recency: u64,
    /// Fruits hang this many blocks below the miner's tip.
    pub hang_depth: u64,
    /// Depth at which a block counts as confirmed for liveness.
    pub confirm_depth: u64,
}

impl PowChainParams {
    /// Parameters for a chain expected to grow `f` blocks per slot under `queries` per slot.
    pub fn new(kind: PowChainKind, epoch_blocks: u64, f: f64, queries: f64) -> Self {
        PowChainParams {
            kind,
            epoch_blocks,
            epoch_slots: (epoch_blocks as f64 / f).round() as u64,
            initial_target: (f / queries).min(1.0),
            clamp: None,
            fruit_ratio: 10.0,
            fruit_recency: 16,
            hang_depth: 2,
            confirm_depth: 6,
        }
    }
}

#[derive(Clone, Debug)]
struct ChainBlock {
    parent: usize,
    height: u64,
    slot: Slot,
    honest: bool,
    /// Target that children must meet.
    next_target: f64,
    epoch_start: Slot,
    fruits: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Fruit {
    hang: usize,
    honest: bool,
    included_in: Vec<usize>,
}

/// Block tree shared by the honest pool and the attacker.
#[derive(Clone, Debug)]
pub struct PowTree {
    params: PowChainParams,
    blocks: Vec<ChainBlock>,
    fruits: Vec<Fruit>,
}

impl PowTree {
    pub fn new(params: PowChainParams) -> Self {
        let genesis = ChainBlock { parent: 0, height: 0, slot: 0, honest: true, next_target: params.initial_target, epoch_start: 0, fruits: Vec::new() };
        PowTree { params, blocks: vec![genesis], fruits: Vec::new() }
    }

    pub fn height(&self, b: usize) -> u64 {
        self.blocks[b].height
    }

    pub fn slot(&self, b: usize) -> Slot {
        self.blocks[b].slot
    }

    pub fn target(&self, tip: usize) -> f64 {
        self.blocks[tip].next_target
    }

    pub fn ancestor_at(&self, mut b: usize, height: u64) -> usize {
        while self.blocks[b].height > height {
            b = self.blocks[b].parent;
        }
        b
    }

    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        self.ancestor_at(b, self.blocks[a].height) == a
    }

    /// Ancestors from genesis to `tip`.
    pub fn chain(&self, tip: usize) -> Vec<usize> {
        let mut out = vec![tip];
        let mut b = tip;
        while b != 0 {
            b = self.blocks[b].parent;
            out.push(b);
        }
        out.reverse();
        out
    }

    fn fruit_valid(&self, fruit: usize, parent: usize) -> bool {
        let f = &self.fruits[fruit];
        let height = self.blocks[parent].height + 1;
        height - self.blocks[f.hang].height <= self.params.fruit_recency
            && self.is_ancestor(f.hang, parent)
            && !f.included_in.iter().any(|&b| self.is_ancestor(b, parent))
    }

    fn extend(&mut self, parent: usize, slot: Slot, honest: bool, pool: &[usize]) -> usize {
        let fruits: Vec<usize> = pool.iter().copied().filter(|&f| self.fruit_valid(f, parent)).collect();
        let p = &self.blocks[parent];
        let height = p.height + 1;
        let (next_target, epoch_start) = if height.is_multiple_of(self.params.epoch_blocks) {
            let ratio = (slot - p.epoch_start) as f64 / self.params.epoch_slots as f64;
            let ratio = match self.params.clamp {
                Some(c) => ratio.clamp(1.0 / c, c),
                None => ratio,
            };
            ((p.next_target * ratio).min(1.0), slot)
        } else {
            (p.next_target, p.epoch_start)
        };
        let id = self.blocks.len();
        for &f in &fruits {
            self.fruits[f].included_in.push(id);
        }
        self.blocks.push(ChainBlock { parent, height, slot, honest, next_target, epoch_start, fruits });
        id
    }

    fn add_fruit(&mut self, tip: usize, honest: bool) -> usize {
        let hang = self.ancestor_at(tip, self.blocks[tip].height.saturating_sub(self.params.hang_depth));
        self.fruits.push(Fruit { hang, honest, included_in: Vec::new() });
        self.fruits.len() - 1
    }

    fn prune_pool(&self, pool: &mut Vec<usize>, height: u64) {
        let recency = self.params.fruit_recency;
        pool.retain(|&f| self.blocks[self.fruits[f].hang].height + recency + self.params.hang_depth >= height);
    }

    /// `(honest, total)` counts of blocks, or fruits on FruitChain, in the chain ending at `tip`.
    pub fn tally(&self, tip: usize) -> (u64, u64) {
        let chain = self.chain(tip);
        match self.params.kind {
            PowChainKind::Bitcoin => {
                let honest = chain[1..].iter().filter(|&&b| self.blocks[b].honest).count() as u64;
                (honest, chain.len() as u64 - 1)
            }
            PowChainKind::FruitChain => {
                let fruits = chain.iter().flat_map(|&b| self.blocks[b].fruits.iter());
                fruits.fold((0, 0), |(h, t), &f| (h + self.fruits[f].honest as u64, t + 1))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Draws {
    block: bool,
    fruits: u64,
}

#[allow(clippy::too_many_arguments)]
fn draw(oracle: &PowOracle, params: &PowChainParams, party: PartyId, slot: Slot, tip: usize, target: f64, queries: u64, nonce: &mut u64) -> Draws {
    let key = oracle.header_key(party, slot, &Digest::tagged(b"POWCHAIN-TIP", &(tip as u64).to_le_bytes()), &Digest::ZERO);
    let fruit = match params.kind {
        PowChainKind::Bitcoin => 0.0,
        PowChainKind::FruitChain => (target * params.fruit_ratio).min(1.0),
    };
    let block_target = Target::clamped(target);
    let mut out = Draws::default();
    for _ in 0..queries {
        let n = *nonce;
        *nonce += 1;
        out.block |= PowOracle::succeeds(key, n, block_target);
        if unit_interval(PowOracle::draw(key, n)) >= 1.0 - fruit {
            out.fruits += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowChainConfig {
    pub params: PowChainParams,
    pub participation: ParticipationSchedule,
    /// Tie-break probability for the selfish attacker; `None` runs honestly.
    pub selfish_p: Option<f64>,
    /// Liveness bound in slots.
    pub liveness_wait: u64,
    /// A transaction is submitted every this many slots.
    pub tx_period: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PowChainOutcome {
    pub height: u64,
    pub epochs_completed: u64,
    pub honest_units: u64,
    pub total_units: u64,
    pub honest_fraction: f64,
    /// Main-chain height at the end of each `epoch_slots` window.
    pub growth: Vec<u64>,
    /// Successive targets along the main chain.
    pub targets: Vec<f64>,
    #[serde(skip)]
    pub liveness: Vec<Violation>,
}

struct Selfish {
    p: f64,
    tip: usize,
    pool: Vec<usize>,
}

/// Runs a Bitcoin or FruitChain network with one honest pool and an optional
/// selfish miner that withholds blocks and matches each honest block.
pub fn run_powchain(cfg: &PowChainConfig) -> PowChainOutcome {
    let params = &cfg.params;
    let oracle = PowOracle::new(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_b17c);
    let mut tree = PowTree::new(params.clone());
    let mut public = 0usize;
    let mut honest_pool: Vec<usize> = Vec::new();
    let mut selfish = cfg.selfish_p.map(|p| Selfish { p, tip: 0, pool: Vec::new() });
    let (mut honest_nonce, mut adv_nonce) = (0u64, 1u64 << 50);
    let slots = cfg.participation.len() as Slot;
    let mut growth = Vec::new();
    let mut tip_history = Vec::with_capacity(slots as usize + 1);
    tip_history.push(0usize);

    for slot in 1..=slots {
        let honest_q = cfg.participation.honest_at(slot);
        let adv_q = cfg.participation.adversarial_at(slot);
        let h = draw(&oracle, params, HONEST_POOL, slot, public, tree.target(public), honest_q, &mut honest_nonce);
        for _ in 0..h.fruits {
            let f = tree.add_fruit(public, true);
            honest_pool.push(f);
        }
        let a = match &selfish {
            Some(s) => draw(&oracle, params, ATTACKER, slot, s.tip, tree.target(s.tip), adv_q, &mut adv_nonce),
            None => draw(&oracle, params, ATTACKER, slot, public, tree.target(public), adv_q, &mut adv_nonce),
        };
        match &mut selfish {
            Some(s) => {
                for _ in 0..a.fruits {
                    let f = tree.add_fruit(s.tip, false);
                    s.pool.push(f);
                }
            }
            None => {
                for _ in 0..a.fruits {
                    let f = tree.add_fruit(public, false);
                    honest_pool.push(f);
                }
            }
        }

        let attacker_first = rng.gen_bool(0.5);
        let mut events = [(a.block, false), (h.block, true)];
        if !attacker_first {
            events.swap(0, 1);
        }
        for (found, honest) in events {
            if !found {
                continue;
            }
            match (&mut selfish, honest) {
                (None, true) => public = tree.extend(public, slot, true, &honest_pool),
                (None, false) => public = tree.extend(public, slot, false, &honest_pool),
                (Some(s), false) => s.tip = tree.extend(s.tip, slot, false, &s.pool),
                (Some(s), true) => {
                    public = tree.extend(public, slot, true, &honest_pool);
                    let height = tree.height(public);
                    if tree.height(s.tip) < height {
                        s.tip = public;
                    } else if !tree.is_ancestor(public, s.tip) {
                        let matched = tree.ancestor_at(s.tip, height);
                        if rng.gen_bool(s.p) {
                            public = matched;
                        }
                    }
                }
            }
        }
        let height = tree.height(public);
        tree.prune_pool(&mut honest_pool, height);
        if let Some(s) = &mut selfish {
            let h = tree.height(s.tip);
            tree.prune_pool(&mut s.pool, h);
        }
        tip_history.push(public);
        if slot % params.epoch_slots == 0 {
            growth.push(height);
        }
    }

    let delivered: Vec<(Digest, Slot)> =
        (1..=slots).filter(|s| s % cfg.tx_period.max(1) == 0).map(|s| (Digest::tagged(b"POWCHAIN-TX", &s.to_le_bytes()), s)).collect();
    let delivered_at: HashMap<Digest, Slot> = delivered.iter().copied().collect();
    let liveness = monitor_liveness(&delivered, cfg.liveness_wait, slots, 1, |_, at, tx| {
        let tip = tip_history[at.min(slots) as usize];
        let confirmed = tree.ancestor_at(tip, tree.height(tip).saturating_sub(params.confirm_depth));
        let since = delivered_at[tx];
        let chain = tree.chain(confirmed);
        chain.iter().position(|&b| tree.slot(b) > since)
    });

    let chain = tree.chain(public);
    let targets = chain.iter().filter(|&&b| b == 0 || tree.height(b).is_multiple_of(params.epoch_blocks)).map(|&b| tree.target(b)).collect();
    let (honest_units, total_units) = tree.tally(public);
    PowChainOutcome {
        height: tree.height(public),
        epochs_completed: tree.height(public) / params.epoch_blocks,
        honest_units,
        total_units,
        honest_fraction: if total_units == 0 { 0.0 } else { honest_units as f64 / total_units as f64 },
        growth,
        targets,
        liveness,
    }
}

/// Selfish-mining run at a constant total of `queries` per slot.
pub fn powchain_selfish(kind: PowChainKind, beta_w: f64, p: f64, seed: u64) -> PowChainOutcome {
    let queries = 100u64;
    let adversarial = (beta_w * queries as f64).round() as u64;
    let f = 0.05;
    let params = PowChainParams::new(kind, 1_000_000, f, queries as f64);
    let cfg = PowChainConfig {
        params,
        participation: ParticipationSchedule::constant(20_000, queries - adversarial, queries),
        selfish_p: Some(p),
        liveness_wait: 2_000,
        tx_period: 1_000,
        seed,
    };
    run_powchain(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn honest(participation: ParticipationSchedule, params: PowChainParams, seed: u64) -> PowChainOutcome {
        run_powchain(&PowChainConfig { params, participation, selfish_p: None, liveness_wait: 1_000, tx_period: 100, seed })
    }

    #[test]
    fn constant_power_keeps_target() {
        let params = PowChainParams::new(PowChainKind::Bitcoin, 400, 0.1, 100.0);
        let out = honest(ParticipationSchedule::constant(40_000, 100, 100), params, 3);
        assert!(out.epochs_completed >= 8, "{out:?}");
        for w in out.targets.windows(2) {
            let ratio = w[1] / w[0];
            assert!((0.85..1.15).contains(&ratio), "{ratio}");
        }
        let mean: f64 = out.targets.windows(2).map(|w| w[1] / w[0]).sum::<f64>() / (out.targets.len() - 1) as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
        assert!(out.liveness.is_empty());
    }

    #[test]
    fn no_hash_power_no_blocks() {
        let params = PowChainParams::new(PowChainKind::FruitChain, 400, 0.1, 100.0);
        let out = honest(ParticipationSchedule::constant(2_000, 0, 0), params, 0);
        assert_eq!(out.height, 0);
        assert_eq!(out.total_units, 0);
    }

    #[test]
    fn clamp_bounds_adjustment() {
        let mut params = PowChainParams::new(PowChainKind::Bitcoin, 100, 0.1, 100.0);
        params.initial_target /= 10.0;
        params.clamp = Some(4.0);
        let out = honest(ParticipationSchedule::constant(30_000, 100, 100), params, 1);
        assert!(out.targets.len() >= 2);
        assert!((out.targets[1] / out.targets[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn halving_stalls_growth() {
        let params = PowChainParams::new(PowChainKind::Bitcoin, 400, 0.1, 4096.0);
        let out = honest(ParticipationSchedule::halving(10, 4000, 1024, 0), params, 0);
        assert_eq!(out.epochs_completed, 0);
        assert!(out.growth[0] > 50 && out.growth[0] < 160, "{:?}", out.growth);
        assert!(out.growth[9] - out.growth[6] < 10, "{:?}", out.growth);
        assert!(!out.liveness.is_empty());
    }

    #[test]
    fn fruitchain_honest_fruits_track_share() {
        let out = powchain_selfish(PowChainKind::FruitChain, 0.25, 1.0, 0);
        assert!(out.total_units > 5_000, "{out:?}");
        assert!(out.honest_fraction > 0.65, "{out:?}");
    }

    #[test]
    fn bitcoin_majority_selfish_miner_takes_chain() {
        let out = powchain_selfish(PowChainKind::Bitcoin, 0.67, 1.0, 0);
        assert!(out.honest_fraction < 0.05, "{out:?}");
    }
}
