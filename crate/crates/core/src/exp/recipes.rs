use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{num, Table};
use crate::adversary::{
    long_range_attack, private_chain_attack, selfish_mining, spammer, LongRangeConfig, LongRangeOutcome, PrivateChainConfig, SelfishConfig, SpamConfig,
};
use crate::baselines::{powchain_selfish, run_powchain, PowChainConfig, PowChainKind, PowChainOutcome, PowChainParams};
use crate::epoch::{fairness_check, FairnessViolation, Setup};
use crate::ledger::{BlockStore, PartyId, PosIdx};
use crate::netsim::{Scenario, Sim};
use crate::node::NodeConfig;
use crate::params::{epoch_of, ParticipationSchedule, ProtocolParams};
use crate::rules::SelectionRule;
use crate::stake::StakeDistribution;

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn honest_setup(params: ProtocolParams, nodes: u32, seed: u64, h1: f64) -> Arc<Setup> {
    let actual = StakeDistribution::from_f64((0..nodes).map(|i| (PartyId(i), 1.0))).expect("positive stake");
    Arc::new(Setup::new(params, seed, actual, h1))
}

/// Per-slot referenced difficulty on the chain ending at `tip`, attributed to
/// the slot of the referencing block: `(total, subset)`.
pub fn referenced_difficulty(store: &BlockStore, tip: PosIdx, slots: usize, subset: impl Fn(PartyId) -> bool) -> (Vec<f64>, Vec<f64>) {
    let mut total = vec![0.0; slots];
    let mut part = vec![0.0; slots];
    for b in store.chain(tip).blocks().iter().skip(1) {
        let i = b.slot as usize - 1;
        if i >= slots {
            continue;
        }
        for r in &b.pow_refs {
            let w = store.pow(r).expect("referenced blocks are stored");
            total[i] += w.difficulty();
            if subset(w.miner) {
                part[i] += w.difficulty();
            }
        }
    }
    (total, part)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessConfig {
    pub epochs: u64,
    pub epoch_len: u64,
    pub kappa: u64,
    pub f_w: f64,
    pub f_s: f64,
    pub omega: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub nodes: u32,
    pub queries_per_node: u64,
    pub subset_nodes: u32,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            epochs: 20,
            epoch_len: 3400,
            kappa: 40,
            f_w: 1.0,
            f_s: 0.5,
            omega: 0.5,
            lambda: 3.2,
            epsilon: 0.05,
            nodes: 5,
            queries_per_node: 10,
            subset_nodes: 1,
        }
    }
}

impl FairnessConfig {
    pub fn params(&self) -> ProtocolParams {
        let mut p = ProtocolParams::with_defaults(self.epoch_len, self.kappa, 1, self.f_w, self.f_s, self.omega, self.epochs);
        p.lambda = self.lambda;
        p.epsilon = self.epsilon;
        p.sigma = 4.0 * self.epsilon;
        p
    }

    pub fn phi(&self) -> f64 {
        self.subset_nodes as f64 / self.nodes as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FairnessRun {
    pub seed: u64,
    pub min_window: u64,
    pub required_share: f64,
    pub overall_share: f64,
    pub violation: Option<FairnessViolation>,
    pub elapsed_secs: f64,
}

pub fn fairness_run(cfg: &FairnessConfig, seed: u64) -> FairnessRun {
    let start = std::time::Instant::now();
    let p = cfg.params();
    let min_window = p.fairness_window().expect("fairness parameters are valid");
    let honest = cfg.queries_per_node * cfg.nodes as u64;
    let slots = p.total_slots() as usize;
    let rule = SelectionRule::Mc { k: p.k_cp as u32 };
    let setup = honest_setup(p.clone(), cfg.nodes, seed, honest as f64);
    let nodes = (0..cfg.nodes).map(|i| NodeConfig::new(PartyId(i), rule)).collect();
    let mut scenario = Scenario::honest(setup, nodes, ParticipationSchedule::constant(slots, honest, honest), seed);
    scenario.subset = (0..cfg.nodes).map(|i| i < cfg.subset_nodes).collect();
    let sim = Sim::new(scenario).expect("valid scenario").run();
    let node = &sim.nodes[0];
    let (total, subset) = referenced_difficulty(node.store(), node.tip(), slots, |m| m.0 < cfg.subset_nodes);
    let violation = fairness_check(&total, &subset, min_window as usize, cfg.phi(), p.sigma);
    FairnessRun {
        seed,
        min_window,
        required_share: (1.0 - p.sigma) * cfg.phi(),
        overall_share: subset.iter().sum::<f64>() / total.iter().sum::<f64>().max(f64::MIN_POSITIVE),
        violation,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

pub fn fairness(cfg: &FairnessConfig, seeds: &[u64]) -> (Vec<FairnessRun>, Table) {
    let runs: Vec<FairnessRun> = seeds.par_iter().map(|&s| fairness_run(cfg, s)).collect();
    let mut t = Table::new(&[
        ("seed", "id"),
        ("min_window", "slots"),
        ("required_share", "fraction"),
        ("overall_share", "fraction"),
        ("worst_share", "fraction"),
        ("violations", "count"),
    ]);
    for r in &runs {
        let worst = r.violation.as_ref().map_or_else(String::new, |v| num(v.subset_share));
        t.push(vec![
            r.seed.to_string(),
            r.min_window.to_string(),
            num(r.required_share),
            num(r.overall_share),
            worst,
            (r.violation.is_some() as u8).to_string(),
        ]);
    }
    (runs, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDiffConfig {
    pub epochs: u64,
    pub epoch_len: u64,
    /// Expected blocks per slot for every protocol.
    pub f: f64,
    pub initial_queries: u64,
    /// The epoch-1 estimate overstates the true query count by this factor.
    pub estimate_factor: f64,
    pub epoch_blocks: u64,
    pub kappa: u64,
    pub f_s: f64,
    pub omega: f64,
    pub nodes: u32,
    pub liveness_wait: u64,
    pub tx_period: u64,
    /// Allowed relative residual of the cumulative referenced count from a straight line.
    pub linear_tolerance: f64,
}

impl Default for VariableDiffConfig {
    fn default() -> Self {
        VariableDiffConfig {
            epochs: 10,
            epoch_len: 4000,
            f: 0.1,
            initial_queries: 1024,
            estimate_factor: 4.0,
            epoch_blocks: 400,
            kappa: 40,
            f_s: 0.1,
            omega: 0.5,
            nodes: 4,
            liveness_wait: 4000,
            tx_period: 100,
            linear_tolerance: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariableDiffOutcome {
    pub seed: u64,
    pub bitcoin: PowChainOutcome,
    pub bitcoin_liveness_violations: usize,
    pub fruitchain: PowChainOutcome,
    pub fruitchain_liveness_violations: usize,
    /// Referenced PoW blocks per epoch on Minotaur's main chain.
    pub minotaur_per_epoch: Vec<u64>,
    /// Largest relative residual of the cumulative count from a straight line.
    pub minotaur_deviation: f64,
}

/// Largest relative residual of the cumulative counts at the end of epochs
/// 2.. from their least-squares line. Epoch 1 runs on the initial estimate, so
/// it only shifts the intercept.
pub fn linear_deviation(counts: &[u64]) -> f64 {
    let ys: Vec<f64> = counts
        .iter()
        .scan(0u64, |acc, &c| {
            *acc += c;
            Some(*acc as f64)
        })
        .skip(1)
        .collect();
    if ys.len() < 2 {
        return f64::INFINITY;
    }
    let mx = mean((0..ys.len()).map(|x| x as f64));
    let my = mean(ys.iter().copied());
    let sxx: f64 = (0..ys.len()).map(|x| (x as f64 - mx).powi(2)).sum();
    let sxy: f64 = ys.iter().enumerate().map(|(x, y)| (x as f64 - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if slope <= 0.0 {
        return f64::INFINITY;
    }
    let intercept = my - slope * mx;
    ys.iter()
        .enumerate()
        .map(|(x, y)| {
            let fit = intercept + slope * x as f64;
            (y - fit).abs() / fit.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

pub fn variable_diff_run(cfg: &VariableDiffConfig, seed: u64) -> VariableDiffOutcome {
    let participation = ParticipationSchedule::halving(cfg.epochs, cfg.epoch_len, cfg.initial_queries, 0);
    let estimate = cfg.initial_queries as f64 * cfg.estimate_factor;
    let chain = |kind| {
        let mut params = PowChainParams::new(kind, cfg.epoch_blocks, cfg.f, estimate);
        params.epoch_slots = cfg.epoch_len;
        run_powchain(&PowChainConfig {
            params,
            participation: participation.clone(),
            selfish_p: None,
            liveness_wait: cfg.liveness_wait,
            tx_period: cfg.tx_period,
            seed,
        })
    };
    let bitcoin = chain(PowChainKind::Bitcoin);
    let fruitchain = chain(PowChainKind::FruitChain);

    let p = ProtocolParams::with_defaults(cfg.epoch_len, cfg.kappa, 1, cfg.f, cfg.f_s, cfg.omega, cfg.epochs);
    let rule = SelectionRule::Mc { k: p.k_cp as u32 };
    let setup = honest_setup(p, cfg.nodes, seed, estimate);
    let nodes = (0..cfg.nodes).map(|i| NodeConfig::new(PartyId(i), rule)).collect();
    let sim = Sim::new(Scenario::honest(setup, nodes, participation, seed)).expect("valid scenario").run();
    let node = &sim.nodes[0];
    let mut per_epoch = vec![0u64; cfg.epochs as usize];
    for b in node.store().chain(node.tip()).blocks().iter().skip(1) {
        per_epoch[epoch_of(b.slot, cfg.epoch_len) as usize - 1] += b.pow_refs.len() as u64;
    }
    VariableDiffOutcome {
        seed,
        bitcoin_liveness_violations: bitcoin.liveness.len(),
        fruitchain_liveness_violations: fruitchain.liveness.len(),
        bitcoin,
        fruitchain,
        minotaur_deviation: linear_deviation(&per_epoch),
        minotaur_per_epoch: per_epoch,
    }
}

pub fn variable_diff(cfg: &VariableDiffConfig, seeds: &[u64]) -> (Vec<VariableDiffOutcome>, Table) {
    let runs: Vec<VariableDiffOutcome> = seeds.par_iter().map(|&s| variable_diff_run(cfg, s)).collect();
    let mut t = Table::new(&[("seed", "id"), ("protocol", "name"), ("epoch", "epoch"), ("chain_height", "blocks"), ("referenced_pow", "blocks")]);
    for r in &runs {
        for e in 0..cfg.epochs as usize {
            for (name, out) in [("bitcoin", &r.bitcoin), ("fruitchain", &r.fruitchain)] {
                let h = out.growth.get(e).copied().unwrap_or(0);
                t.push(vec![r.seed.to_string(), name.into(), (e + 1).to_string(), h.to_string(), String::new()]);
            }
            let cum: u64 = r.minotaur_per_epoch[..=e].iter().sum();
            t.push(vec![r.seed.to_string(), "minotaur".into(), (e + 1).to_string(), String::new(), cum.to_string()]);
        }
    }
    (runs, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfishTableConfig {
    pub beta_w: Vec<f64>,
    pub p: Vec<f64>,
    pub minotaur: SelfishConfig,
}

impl Default for SelfishTableConfig {
    fn default() -> Self {
        SelfishTableConfig { beta_w: vec![0.25, 0.33, 0.5, 0.67, 0.75], p: vec![1.0, 0.7], minotaur: SelfishConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Bitcoin,
    Fruitchain,
    Minotaur,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfishCell {
    pub protocol: Protocol,
    pub beta_w: f64,
    pub p: f64,
    pub honest_fraction: f64,
}

pub fn selfish_table(cfg: &SelfishTableConfig, seeds: &[u64]) -> (Vec<SelfishCell>, Table) {
    let mut cells = Vec::new();
    for protocol in [Protocol::Bitcoin, Protocol::Fruitchain, Protocol::Minotaur] {
        for &p in &cfg.p {
            for &beta_w in &cfg.beta_w {
                cells.push((protocol, beta_w, p));
            }
        }
    }
    let cells: Vec<SelfishCell> = cells
        .into_par_iter()
        .map(|(protocol, beta_w, p)| {
            let fractions = seeds.par_iter().map(|&seed| match protocol {
                Protocol::Bitcoin => powchain_selfish(PowChainKind::Bitcoin, beta_w, p, seed).honest_fraction,
                Protocol::Fruitchain => powchain_selfish(PowChainKind::FruitChain, beta_w, p, seed).honest_fraction,
                Protocol::Minotaur => selfish_mining(&SelfishConfig { beta_w, p, seed, ..cfg.minotaur.clone() }).honest_fraction,
            });
            SelfishCell { protocol, beta_w, p, honest_fraction: mean(fractions.collect::<Vec<_>>()) }
        })
        .collect();
    let mut t = Table::new(&[("protocol", "name"), ("beta_w", "fraction"), ("p", "probability"), ("honest_fraction", "fraction")]);
    for c in &cells {
        let name = serde_json::to_value(c.protocol).expect("serializes").as_str().unwrap_or_default().to_string();
        t.push(vec![name, num(c.beta_w), num(c.p), num(c.honest_fraction)]);
    }
    (cells, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivateHeatmapConfig {
    /// Grid points per axis minus one; 10 gives a 0.1 step.
    pub steps: u32,
    pub base: PrivateChainConfig,
}

impl Default for PrivateHeatmapConfig {
    fn default() -> Self {
        PrivateHeatmapConfig { steps: 10, base: PrivateChainConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub beta_s: f64,
    pub beta_w: f64,
    pub lengths: Vec<u64>,
}

impl HeatmapCell {
    pub fn mean(&self) -> f64 {
        mean(self.lengths.iter().map(|&l| l as f64))
    }

    pub fn max(&self) -> u64 {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    pub fn successes(&self, k_cp: u64) -> usize {
        self.lengths.iter().filter(|&&l| l > k_cp).count()
    }
}

pub fn private_cell(base: &PrivateChainConfig, beta_s: f64, beta_w: f64, seeds: &[u64]) -> HeatmapCell {
    let lengths = seeds.par_iter().map(|&seed| private_chain_attack(&PrivateChainConfig { beta_s, beta_w, seed, ..base.clone() }).longest).collect();
    HeatmapCell { beta_s, beta_w, lengths }
}

pub fn private_heatmap(cfg: &PrivateHeatmapConfig, seeds: &[u64]) -> (Vec<HeatmapCell>, Table) {
    let n = cfg.steps.max(1);
    let grid: Vec<(f64, f64)> = (0..=n).flat_map(|i| (0..=n).map(move |j| (i as f64 / n as f64, j as f64 / n as f64))).collect();
    let cells: Vec<HeatmapCell> = grid.into_par_iter().map(|(bs, bw)| private_cell(&cfg.base, bs, bw, seeds)).collect();
    let k_cp = cfg.base.kappa;
    let mut t = Table::new(&[("beta_s", "fraction"), ("beta_w", "fraction"), ("mean_length", "blocks"), ("max_length", "blocks"), ("successes", "seeds")]);
    for c in &cells {
        t.push(vec![num(c.beta_s), num(c.beta_w), num(c.mean()), c.max().to_string(), c.successes(k_cp).to_string()]);
    }
    (cells, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpamSweepConfig {
    pub latencies: Vec<u64>,
    pub base: SpamConfig,
}

impl Default for SpamSweepConfig {
    fn default() -> Self {
        SpamSweepConfig { latencies: vec![0, 1, 2, 4, 8], base: SpamConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpamPoint {
    pub filtered: bool,
    pub extra_latency: u64,
    pub normalized_spam: f64,
}

pub fn spam_sweep(cfg: &SpamSweepConfig, seeds: &[u64]) -> (Vec<SpamPoint>, Table) {
    let mut points = vec![(false, 0)];
    points.extend(cfg.latencies.iter().map(|&l| (true, l)));
    let out: Vec<SpamPoint> = points
        .into_par_iter()
        .map(|(filtered, extra_latency)| {
            let v: Vec<f64> =
                seeds.par_iter().map(|&seed| spammer(&SpamConfig { filtered, extra_latency, seed, ..cfg.base.clone() }).normalized_spam).collect();
            SpamPoint { filtered, extra_latency, normalized_spam: mean(v) }
        })
        .collect();
    let mut t = Table::new(&[("filtered", "bool"), ("extra_latency", "slots"), ("normalized_spam", "fraction")]);
    for p in &out {
        t.push(vec![p.filtered.to_string(), p.extra_latency.to_string(), num(p.normalized_spam)]);
    }
    (out, t)
}

pub fn long_range(cfg: &LongRangeConfig, seeds: &[u64]) -> (Vec<LongRangeOutcome>, Table) {
    let runs: Vec<LongRangeOutcome> = seeds.par_iter().map(|&seed| long_range_attack(&LongRangeConfig { seed, ..cfg.clone() })).collect();
    let fork = (cfg.attack_epoch - 1) * cfg.epoch_len;
    let mut t = Table::new(&[("seed", "id"), ("adopted_mc", "bool"), ("adopted_bg", "bool"), ("overtake_slot", "slot"), ("overtake_after_fork", "epochs")]);
    for (seed, r) in seeds.iter().zip(&runs) {
        let (slot, epochs) = match r.overtake_slot {
            Some(s) => (s.to_string(), num(s.saturating_sub(fork) as f64 / cfg.epoch_len as f64)),
            None => (String::new(), String::new()),
        };
        t.push(vec![seed.to_string(), r.adopted_mc.to_string(), r.adopted_bg.to_string(), slot, epochs]);
    }
    (runs, t)
}
