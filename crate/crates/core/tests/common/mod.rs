#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use minotaur::baselines::pure_pos_scenario;
use minotaur::exp::{check_monitors, run_experiment, run_scenario, ScenarioConfig};
use minotaur::ledger::{Block, BlockStore, Chain, Digest, PartyId, PosBlock, PowBlock, Slot, Target};
use minotaur::lottery::LotteryProof;
use minotaur::netsim::Sim;
use minotaur::rules::{maxvalid_bg, maxvalid_mc, SelectionRule};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pos(parent: &PosBlock, slot: Slot, tag: u64, refs: Vec<Digest>) -> PosBlock {
    PosBlock::new(slot, parent.id, PartyId(tag as u32), LotteryProof::genesis(), Digest::tagged(b"test", &tag.to_le_bytes()), refs)
}

/// A random PoS tree with `1..=max_blocks` blocks besides genesis, returned as
/// the root path of every block.
pub fn random_tree(rng: &mut ChaCha8Rng, max_blocks: usize) -> (BlockStore, Vec<Chain>) {
    let genesis = Arc::new(PosBlock::genesis(Digest::ZERO));
    let mut store = BlockStore::new((*genesis).clone());
    let mut paths: Vec<Vec<Arc<PosBlock>>> = vec![vec![genesis]];
    for tag in 0..rng.gen_range(1..=max_blocks) as u64 {
        let mut path = paths[rng.gen_range(0..paths.len())].clone();
        let parent = path.last().unwrap().clone();
        let b = Arc::new(pos(&parent, parent.slot + rng.gen_range(1..=4), tag, vec![]));
        store.insert_block(Block::from((*b).clone()));
        path.push(b);
        paths.push(path);
    }
    let chains = paths.into_iter().map(|p| Chain::from_blocks(p).unwrap()).collect();
    (store, chains)
}

fn ids(c: &Chain) -> Vec<Digest> {
    c.ids().collect()
}

/// Blocks of `current` missing from `c`.
fn discarded(current: &Chain, c: &Chain) -> usize {
    let other: BTreeSet<Digest> = c.ids().collect();
    current.ids().filter(|d| !other.contains(d)).count()
}

/// Slot of the latest block two chains share.
fn fork_slot(a: &Chain, b: &Chain) -> Slot {
    let other: BTreeSet<Digest> = b.ids().collect();
    a.blocks().iter().filter(|x| other.contains(&x.id)).map(|x| x.slot).max().unwrap()
}

fn density(c: &Chain, after: Slot, s: u64) -> usize {
    c.blocks().iter().filter(|b| b.slot > after && b.slot <= after + s).count()
}

/// Longest admissible chain by enumeration; the held chain wins ties, then
/// the earliest candidate.
fn oracle_mc(current: &Chain, candidates: &[Chain], k: usize) -> Vec<Digest> {
    let admissible: Vec<&Chain> = candidates.iter().filter(|c| discarded(current, c) <= k).collect();
    let longest = admissible.iter().map(|c| c.len()).chain([current.len()]).max().unwrap();
    if current.len() == longest {
        return ids(current);
    }
    ids(admissible.into_iter().find(|c| c.len() == longest).unwrap())
}

fn oracle_bg(current: &Chain, candidates: &[Chain], k: usize, s: u64) -> Vec<Digest> {
    let mut best = current.clone();
    for c in candidates {
        let wins = if discarded(current, c) <= k { c.len() > best.len() } else { density(c, fork_slot(&best, c), s) > density(&best, fork_slot(&best, c), s) };
        if wins {
            best = c.clone();
        }
    }
    ids(&best)
}

/// Checks both chain-selection rules, on chains and on the store, against the
/// enumeration oracles for one random instance of at most 12 blocks.
pub fn check_maxvalid(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (store, chains) = random_tree(&mut rng, 12);
    let current = chains.choose(&mut rng).unwrap().clone();
    let mut candidates: Vec<Chain> = chains.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
    candidates.shuffle(&mut rng);
    let k = rng.gen_range(0..6);
    let s = rng.gen_range(1..12);
    let idx = |c: &Chain| store.pos_idx(&c.head().id).unwrap();
    let cand_idx: Vec<_> = candidates.iter().map(idx).collect();
    let head = |v: &[Digest]| *v.last().unwrap();

    let want_mc = oracle_mc(&current, &candidates, k);
    if ids(&maxvalid_mc(&current, &candidates, k)) != want_mc {
        return Err(format!("seed {seed}: maxvalid_mc disagrees (k={k})"));
    }
    let got = SelectionRule::Mc { k: k as u32 }.select(&store, idx(&current), &cand_idx);
    if store.pos(got).id != head(&want_mc) {
        return Err(format!("seed {seed}: store mc disagrees (k={k})"));
    }
    let want_bg = oracle_bg(&current, &candidates, k, s);
    if ids(&maxvalid_bg(&current, &candidates, k, s)) != want_bg {
        return Err(format!("seed {seed}: maxvalid_bg disagrees (k={k}, s={s})"));
    }
    let got = SelectionRule::Bg { k: k as u32, s }.select(&store, idx(&current), &cand_idx);
    if store.pos(got).id != head(&want_bg) {
        return Err(format!("seed {seed}: store bg disagrees (k={k}, s={s})"));
    }
    Ok(())
}

/// PoS tree with PoW blocks anchored on it and referenced by later PoS
/// blocks. A few PoS blocks reuse their parent's slot and must be rejected
/// along with their descendants.
pub fn random_dag(seed: u64) -> (PosBlock, Vec<Block>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genesis = PosBlock::genesis(Digest::tagged(b"test", b"genesis"));
    let mut pos_blocks = vec![genesis.clone()];
    let mut pow: Vec<Digest> = Vec::new();
    let mut out = Vec::new();
    for tag in 0..rng.gen_range(4..24u64) {
        if rng.gen_bool(0.3) {
            let anchor = &pos_blocks[rng.gen_range(0..pos_blocks.len())];
            let w = PowBlock::new(PartyId(7), anchor.slot + 1, anchor.id, vec![], tag, Target::MAX);
            pow.push(w.id);
            out.push(Block::from(w));
        } else {
            let parent = pos_blocks[rng.gen_range(0..pos_blocks.len())].clone();
            let step = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..4) };
            let refs = pow.iter().filter(|_| rng.gen_bool(0.3)).copied().collect();
            let b = pos(&parent, parent.slot + step, tag, refs);
            pos_blocks.push(b.clone());
            out.push(Block::from(b));
        }
    }
    (genesis, out)
}

/// Height, parent, children and root path of a PoS block.
type PosView = (u32, Option<Digest>, BTreeSet<Digest>, Vec<Digest>);

/// Everything about a store that does not depend on arrival order.
#[derive(Debug, PartialEq, Eq)]
pub struct StoreView {
    contents: BTreeSet<Digest>,
    rejected: BTreeSet<Digest>,
    pending: usize,
    pos: BTreeMap<Digest, PosView>,
    referencers: BTreeMap<Digest, BTreeSet<Digest>>,
}

pub fn store_view(genesis: &PosBlock, blocks: &[Block]) -> StoreView {
    let mut store = BlockStore::new(genesis.clone());
    for b in blocks {
        store.insert_block(b.clone());
    }
    let mut pos = BTreeMap::new();
    let mut referencers = BTreeMap::new();
    for b in blocks {
        let id = b.id();
        if let Some(i) = store.pos_idx(&id) {
            let parent = store.parent(i).map(|p| store.pos(p).id);
            let children = store.children(i).iter().map(|&c| store.pos(c).id).collect();
            pos.insert(id, (store.height(i), parent, children, store.chain(i).ids().collect()));
        } else if store.pow(&id).is_some() {
            referencers.insert(id, store.referencers(&id).iter().map(|&r| store.pos(r).id).collect());
        }
    }
    StoreView {
        contents: store.contents(),
        rejected: blocks.iter().map(Block::id).filter(|d| store.is_rejected(d)).collect(),
        pending: store.pending_len(),
        pos,
        referencers,
    }
}

/// Inserts one random DAG in canonical order and in a shuffled order.
pub fn check_permutation(seed: u64, shuffle: u64) -> Result<(), String> {
    let (genesis, blocks) = random_dag(seed);
    let mut shuffled = blocks.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
    let a = store_view(&genesis, &blocks);
    if a.pending != 0 {
        return Err(format!("seed {seed}: {} blocks left pending", a.pending));
    }
    if a != store_view(&genesis, &shuffled) {
        return Err(format!("seed {seed}, permutation {shuffle}: stores differ"));
    }
    Ok(())
}

pub fn honest_config(omega: f64, seeds: Vec<u64>) -> ScenarioConfig {
    let text = format!(
        "name = \"honest\"\nseeds = {seeds:?}\n[protocol]\nepoch_len = 600\nkappa = 40\nf_w = 0.5\nf_s = 0.5\nomega = {omega}\nepochs = 4\n[network]\nnodes = 5\ndelay = \"uniform\"\n"
    );
    ScenarioConfig::from_toml(&text).unwrap()
}

/// Monitor violations of an honest run at the given work weight.
pub fn honest_violations(omega: f64, seed: u64) -> usize {
    let cfg = honest_config(omega, vec![seed]);
    let sim = Sim::new(cfg.scenario(seed)).unwrap().run();
    check_monitors(&sim, &cfg.monitors).len()
}

/// Trace CSVs of the pure-PoS baseline and of Minotaur at `ω = 0` with no
/// mining.
pub fn pure_pos_traces(seed: u64) -> (String, String) {
    let mut cfg = honest_config(0.0, vec![seed]);
    cfg.mining.queries_per_node = 0;
    let minotaur = Sim::new(cfg.scenario(seed)).unwrap().run();
    let p = cfg.protocol.params();
    let mut scenario = pure_pos_scenario(p.clone(), cfg.network.nodes, cfg.network.rule.rule(&p), seed);
    scenario.delay = cfg.scenario(seed).delay;
    let baseline = Sim::new(scenario).unwrap().run();
    (minotaur.trace.to_csv(&minotaur.global), baseline.trace.to_csv(&baseline.global))
}

/// `(slot, leader)` of node 0's final chain for Minotaur at `ω = 0` with
/// miners running and for the pure-PoS baseline, both with fixed delays.
pub fn omega_zero_leaders(seed: u64) -> (Vec<(Slot, PartyId)>, Vec<(Slot, PartyId)>) {
    let mut cfg = honest_config(0.0, vec![seed]);
    cfg.network.delay = minotaur::exp::config::DelaySpec::Max;
    let leaders = |sim: &Sim| {
        let node = &sim.nodes[0];
        node.store().chain(node.tip()).blocks().iter().map(|b| (b.slot, b.leader)).collect::<Vec<_>>()
    };
    let minotaur = Sim::new(cfg.scenario(seed)).unwrap().run();
    let p = cfg.protocol.params();
    let baseline = Sim::new(pure_pos_scenario(p.clone(), cfg.network.nodes, cfg.network.rule.rule(&p), seed)).unwrap().run();
    (leaders(&minotaur), leaders(&baseline))
}

/// Runs a scenario and two small experiment recipes twice each.
pub fn reruns_identical() -> Result<(), String> {
    let cfg = honest_config(0.5, vec![0, 1]);
    if run_scenario(&cfg).unwrap().csv() != run_scenario(&cfg).unwrap().csv() {
        return Err("scenario CSV differs between runs".into());
    }
    let recipes: [(&str, Vec<String>); 2] = [
        ("private-heatmap", vec!["steps=2".into(), "base.epoch_len=300".into(), "base.kappa=10".into()]),
        ("spam", vec!["latencies=[0]".into(), "base.epochs=1".into(), "base.stop_at=500".into()]),
    ];
    for (name, sets) in recipes {
        let a = run_experiment(name, &sets, Some(2)).unwrap().csv();
        let b = run_experiment(name, &sets, Some(2)).unwrap().csv();
        if a != b {
            return Err(format!("{name} CSV differs between runs"));
        }
    }
    Ok(())
}
