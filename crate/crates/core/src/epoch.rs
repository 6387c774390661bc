//! Per-epoch state: nonces, PoW targets and virtual stake, plus the analysis
//! predicates evaluated over mining traces.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::block::exact_f64;
use crate::ledger::{BlockStore, Chain, Digest, EpochIndex, PartyId, PosBlock, PosIdx, Slot, Target};
use crate::lottery::{mix_epoch_nonce, nonce_window, EpochNonce, PowOracle, Prf};
use crate::params::ProtocolParams;
use crate::stake::{rational, virtual_shares, work_stake, StakeDistribution, StakeError};

#[derive(Debug, Error, PartialEq)]
pub enum EpochError {
    #[error("epoch {0} has no measurement window (needs epoch >= {1})")]
    EpochTooEarly(EpochIndex, EpochIndex),
    #[error("window of {window} slots is shorter than the required {required}")]
    WindowTooShort { window: u64, required: u64 },
    #[error(transparent)]
    Stake(#[from] StakeError),
    #[error("referenced PoW block {0:?} is missing from the store")]
    MissingReference(Digest),
}

/// Counts referenced PoW blocks per (miner, target) so difficulty sums stay
/// exact without growing denominators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DifficultyTally {
    counts: BTreeMap<(PartyId, u64), u64>,
}

impl DifficultyTally {
    pub fn record(&mut self, miner: PartyId, target: Target) {
        *self.counts.entry((miner, target.value().to_bits())).or_default() += 1;
    }

    /// Tallies the PoW references of `blocks`.
    pub fn from_blocks<'a>(blocks: impl IntoIterator<Item = &'a PosBlock>, store: &BlockStore) -> Result<Self, EpochError> {
        let mut t = DifficultyTally::default();
        for b in blocks {
            for r in &b.pow_refs {
                let w = store.pow(r).ok_or(EpochError::MissingReference(*r))?;
                t.record(w.miner, w.target);
            }
        }
        Ok(t)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn blocks(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Exact referenced difficulty per miner.
    pub fn per_party(&self) -> StakeDistribution {
        let mut by_target: BTreeMap<u64, BigRational> = BTreeMap::new();
        let mut out = StakeDistribution::default();
        for (&(miner, bits), &n) in &self.counts {
            let d = by_target.entry(bits).or_insert_with(|| exact_f64(f64::from_bits(bits)).recip());
            out.add(miner, &*d * BigRational::from_integer(BigInt::from(n)));
        }
        out
    }

    pub fn total(&self) -> BigRational {
        self.per_party().total().clone()
    }
}

/// Piecewise-constant `ω(e)`: the last override at or before `e`, else `default`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub default: f64,
    #[serde(default)]
    pub overrides: BTreeMap<EpochIndex, f64>,
}

impl WeightSchedule {
    pub fn constant(omega: f64) -> Self {
        WeightSchedule { default: omega, overrides: BTreeMap::new() }
    }

    pub fn omega(&self, epoch: EpochIndex) -> f64 {
        self.overrides.range(..=epoch).next_back().map(|(_, &w)| w).unwrap_or(self.default)
    }
}

/// Bound an adversary schedule must meet over the slots of `epoch`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightConstraint {
    pub epoch: EpochIndex,
    pub theta: f64,
    pub window: u64,
    pub omegas: Vec<f64>,
}

/// `ω(e)` together with the bounds that apply to epoch `e − 1`: the adversary
/// must be `(1/2 − 2σ, 2R, ω)`-bounded for both `ω(e)` and `ω(e+1)`.
pub fn weight_schedule(epoch: EpochIndex, schedule: &WeightSchedule, params: &ProtocolParams) -> (f64, WeightConstraint) {
    let now = schedule.omega(epoch);
    let next = schedule.omega(epoch + 1);
    let mut omegas = vec![now];
    if next != now {
        omegas.push(next);
    }
    let c = WeightConstraint { epoch: epoch.saturating_sub(1), theta: 0.5 - 2.0 * params.sigma, window: 2 * params.epoch_len, omegas };
    (now, c)
}

/// Checks a [`WeightConstraint`] against an adversary schedule (index 0 = slot 1).
pub fn weight_constraint_holds(c: &WeightConstraint, adv: &crate::params::AdversarySchedule, epoch_len: u64) -> bool {
    if c.epoch == 0 {
        return true;
    }
    let lo = ((c.epoch - 1) * epoch_len) as usize;
    let part = adv.slice(lo, lo + epoch_len as usize);
    c.omegas.iter().all(|&w| crate::params::is_theta_bounded(&part, c.theta, c.window as usize, w).unwrap_or(false))
}

/// Work stake of epoch `e` from the PoW referenced by chain blocks in epoch `e − 2`.
pub fn work_stake_distribution(
    chain: &Chain,
    store: &BlockStore,
    epoch: EpochIndex,
    epoch_len: u64,
    omega: f64,
    actual_total: &BigRational,
) -> Result<StakeDistribution, EpochError> {
    if epoch < 3 {
        return Err(EpochError::EpochTooEarly(epoch, 3));
    }
    let (lo, hi) = work_window(epoch, epoch_len);
    let tally = DifficultyTally::from_blocks(chain.segment(lo, hi).iter().map(|b| b.as_ref()), store)?;
    Ok(work_stake(&tally.per_party(), &rational(omega), actual_total)?)
}

/// Slots of epoch `e − 2`.
pub fn work_window(epoch: EpochIndex, epoch_len: u64) -> (Slot, Slot) {
    ((epoch - 3) * epoch_len + 1, (epoch - 2) * epoch_len)
}

/// Slot window whose referenced difficulty sets `τ_e`, with the slot count the
/// target is normalized by. `None` for epoch 1.
pub fn target_window(epoch: EpochIndex, p: &ProtocolParams) -> Option<(Slot, Slot, u64)> {
    match epoch {
        0 | 1 => None,
        2 => Some((1, p.epoch_len - p.kappa, p.epoch_len - p.kappa)),
        e => Some(((e - 2) * p.epoch_len - p.kappa + 1, (e - 1) * p.epoch_len - p.kappa, p.epoch_len)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetOutcome {
    pub target: Target,
    /// No difficulty was referenced in the window; the previous target was held.
    pub held: bool,
}

/// `τ_e` from a difficulty tally over the epoch's target window.
pub fn target_from_tally(epoch: EpochIndex, p: &ProtocolParams, h1_estimate: f64, tally: &DifficultyTally, previous: Option<Target>) -> TargetOutcome {
    let Some((_, _, slots)) = target_window(epoch, p) else {
        return TargetOutcome { target: Target::clamped(p.f_w / h1_estimate), held: false };
    };
    let total = tally.total();
    if total.is_zero() {
        let prev = previous.unwrap_or_else(|| Target::clamped(p.f_w / h1_estimate));
        log::warn!("epoch {epoch}: no referenced difficulty in the target window; holding target {}", prev.value());
        return TargetOutcome { target: prev, held: true };
    }
    let num = rational(p.f_w) * BigRational::from_integer(BigInt::from(slots));
    let tau = (num / total).to_f64().unwrap_or(f64::MAX);
    TargetOutcome { target: Target::clamped(tau), held: false }
}

/// `τ_e` computed from `chain`.
pub fn adjust_target(
    chain: &Chain,
    store: &BlockStore,
    epoch: EpochIndex,
    p: &ProtocolParams,
    h1_estimate: f64,
    previous: Option<Target>,
) -> Result<TargetOutcome, EpochError> {
    let tally = match target_window(epoch, p) {
        Some((lo, hi, _)) => DifficultyTally::from_blocks(chain.segment(lo, hi).iter().map(|b| b.as_ref()), store)?,
        None => DifficultyTally::default(),
    };
    Ok(target_from_tally(epoch, p, h1_estimate, &tally, previous))
}

/// `(1−δ)α₀f/γ ≤ h_e·τ_e ≤ (1+δ)γf`.
pub fn good_epoch(h_e: f64, tau_e: f64, p: &ProtocolParams) -> bool {
    let mass = h_e * tau_e;
    let lo = (1.0 - p.delta_good) * p.alpha0 * p.f_w / p.gamma;
    let hi = (1.0 + p.delta_good) * p.gamma * p.f_w;
    lo <= mass && mass <= hi
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
pub enum LeaderMode {
    Praos,
    Classic,
}

/// Everything a node needs to derive epoch state; fixed for a scenario.
#[derive(Clone, Debug)]
pub struct Setup {
    pub params: ProtocolParams,
    pub prf: Prf,
    pub oracle: PowOracle,
    pub actual: StakeDistribution,
    pub weights: WeightSchedule,
    pub h1_estimate: f64,
    pub leader_mode: LeaderMode,
    pub genesis: Arc<PosBlock>,
}

impl Setup {
    pub fn new(params: ProtocolParams, seed: u64, actual: StakeDistribution, h1_estimate: f64) -> Setup {
        let weights = WeightSchedule::constant(params.omega);
        let genesis = Arc::new(PosBlock::genesis(Digest::tagged(b"GENESIS-NONCE", &seed.to_le_bytes())));
        Setup { params, prf: Prf::new(seed), oracle: PowOracle::new(seed), actual, weights, h1_estimate, leader_mode: LeaderMode::Praos, genesis }
    }

    /// Slot through which the chain determines the context of `epoch`.
    pub fn pivot_slot(&self, epoch: EpochIndex) -> Slot {
        if epoch <= 1 {
            0
        } else {
            (epoch - 1) * self.params.epoch_len - self.params.kappa
        }
    }
}

/// Derived state of one epoch on one chain.
#[derive(Clone, Debug)]
pub struct EpochContext {
    pub epoch: EpochIndex,
    pub nonce: EpochNonce,
    pub target: Target,
    pub prev_target: Option<Target>,
    pub target_held: bool,
    pub omega: f64,
    pub shares: StakeDistribution,
    pub work_referenced: bool,
    share_f64: HashMap<PartyId, f64>,
}

impl EpochContext {
    pub fn share(&self, party: PartyId) -> f64 {
        self.share_f64.get(&party).copied().unwrap_or(0.0)
    }

    /// Targets a PoW block referenced in this epoch may carry.
    pub fn accepts_target(&self, t: Target) -> bool {
        t == self.target || self.prev_target == Some(t)
    }
}

/// Memoizes epoch contexts by (epoch, pivot block).
#[derive(Clone, Debug)]
pub struct EpochEngine {
    setup: Arc<Setup>,
    cache: HashMap<(EpochIndex, Digest), Arc<EpochContext>>,
}

impl EpochEngine {
    pub fn new(setup: Arc<Setup>) -> Self {
        EpochEngine { setup, cache: HashMap::new() }
    }

    pub fn setup(&self) -> &Arc<Setup> {
        &self.setup
    }

    /// Context of `epoch` for a block whose parent is `tip`.
    pub fn context(&mut self, store: &BlockStore, tip: PosIdx, epoch: EpochIndex) -> Arc<EpochContext> {
        let epoch = epoch.max(1);
        let pivot = store.ancestor_at_slot(tip, self.setup.pivot_slot(epoch));
        let key = (epoch, store.pos(pivot).id);
        if let Some(c) = self.cache.get(&key) {
            return c.clone();
        }
        let ctx = Arc::new(self.compute(store, pivot, epoch));
        self.cache.insert(key, ctx.clone());
        ctx
    }

    fn collect(store: &BlockStore, pivot: PosIdx, lo: Slot, hi: Slot) -> Vec<PosIdx> {
        let mut out: Vec<PosIdx> = store.ancestors(store.ancestor_at_slot(pivot, hi)).take_while(|&i| store.slot(i) >= lo && store.slot(i) > 0).collect();
        out.reverse();
        out
    }

    fn tally(store: &BlockStore, pivot: PosIdx, lo: Slot, hi: Slot) -> DifficultyTally {
        let blocks = Self::collect(store, pivot, lo, hi);
        DifficultyTally::from_blocks(blocks.iter().map(|&i| store.pos(i).as_ref()), store).expect("attached blocks have their references")
    }

    fn compute(&mut self, store: &BlockStore, pivot: PosIdx, epoch: EpochIndex) -> EpochContext {
        let setup = self.setup.clone();
        let p = &setup.params;
        let prev = (epoch >= 2).then(|| self.context(store, pivot, epoch - 1));

        let nonce = match &prev {
            None => EpochNonce { epoch: 1, value: setup.genesis.nonce_contribution },
            Some(prev) => {
                let (lo, hi) = nonce_window(epoch, p.epoch_len);
                let blocks = Self::collect(store, pivot, lo, hi);
                mix_epoch_nonce(epoch, &prev.nonce, blocks.iter().map(|&i| &store.pos(i).nonce_contribution))
            }
        };

        let tally = match target_window(epoch, p) {
            Some((lo, hi, _)) => Self::tally(store, pivot, lo, hi),
            None => DifficultyTally::default(),
        };
        let outcome = target_from_tally(epoch, p, setup.h1_estimate, &tally, prev.as_ref().map(|c| c.target));

        let omega = setup.weights.omega(epoch);
        let (shares, work_referenced) = if epoch >= 3 {
            let (lo, hi) = work_window(epoch, p.epoch_len);
            let work = Self::tally(store, pivot, lo, hi);
            if work.is_empty() && omega > 0.0 {
                log::warn!("epoch {epoch}: no referenced work in epoch {}; virtual stake falls back to actual stake", epoch - 2);
            }
            (virtual_shares(&setup.actual, &work.per_party(), &rational(omega)), !work.is_empty())
        } else {
            (setup.actual.shares(), false)
        };
        let share_f64 = shares.iter().map(|(p, v)| (p, v.to_f64().unwrap_or(0.0))).collect();
        EpochContext {
            epoch,
            nonce,
            target: outcome.target,
            prev_target: prev.as_ref().map(|c| c.target),
            target_held: outcome.held,
            omega,
            shares,
            work_referenced,
            share_f64,
        }
    }
}

/// Per-slot mining counters used by the typicality predicates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotMining {
    pub honest_queries: u64,
    /// Adversarial queries the schedule allows in this slot.
    pub adversarial_queries: u64,
    /// Difficulty mined by honest parties (p-normalized, `Σ 1/τ`).
    pub honest_difficulty: f64,
    pub adversarial_difficulty: f64,
    pub subset_queries: u64,
    pub subset_difficulty: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TypicalityClause {
    A,
    B,
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypicalityViolation {
    pub clause: TypicalityClause,
    /// First and last slot of the offending window.
    pub window: (Slot, Slot),
    pub observed: f64,
    pub bound: f64,
}

/// Evaluates the typicality clauses over every window of `window` slots.
/// Clause (c) applies only when `subset_fraction` is given and the window is at
/// least `ℓ/φ` long. Only the first violation per clause is reported.
pub fn typicality_check(trace: &[SlotMining], window: u64, p: &ProtocolParams, subset_fraction: Option<f64>) -> Result<Vec<TypicalityViolation>, EpochError> {
    let ell = p.ell().map_err(|_| EpochError::WindowTooShort { window, required: u64::MAX })?;
    if window < ell || window == 0 {
        return Err(EpochError::WindowTooShort { window, required: ell });
    }
    let eps = p.epsilon;
    let w = window as usize;
    let check_c = subset_fraction.is_some_and(|phi| phi > 0.0 && window as f64 >= ell as f64 / phi);
    let mut prefix = vec![[0.0f64; 6]; trace.len() + 1];
    for (i, s) in trace.iter().enumerate() {
        let row = [
            s.honest_queries as f64,
            s.adversarial_queries as f64,
            s.honest_difficulty,
            s.adversarial_difficulty,
            s.subset_queries as f64,
            s.subset_difficulty,
        ];
        for k in 0..6 {
            prefix[i + 1][k] = prefix[i][k] + row[k];
        }
    }
    let mut out: Vec<TypicalityViolation> = Vec::new();
    let mut seen = [false; 3];
    for start in 0..trace.len().saturating_sub(w - 1) {
        let sum = |k: usize| prefix[start + w][k] - prefix[start][k];
        let span = (start as Slot + 1, (start + w) as Slot);
        let (h, j, d, a, nh, dh) = (sum(0), sum(1), sum(2), sum(3), sum(4), sum(5));
        if !seen[0] && h > 0.0 && d >= (1.0 + eps) * h {
            seen[0] = true;
            out.push(TypicalityViolation { clause: TypicalityClause::A, window: span, observed: d, bound: (1.0 + eps) * h });
        }
        if !seen[1] && d + a >= (1.0 + eps) * (h + j) && d + a > 0.0 {
            seen[1] = true;
            out.push(TypicalityViolation { clause: TypicalityClause::B, window: span, observed: d + a, bound: (1.0 + eps) * (h + j) });
        }
        if check_c && !seen[2] && dh <= (1.0 - eps) * nh && nh > 0.0 {
            seen[2] = true;
            out.push(TypicalityViolation { clause: TypicalityClause::C, window: span, observed: dh, bound: (1.0 - eps) * nh });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FairnessViolation {
    pub window: (Slot, Slot),
    pub subset_share: f64,
    pub required: f64,
}

/// Checks that over every window of at least `min_window` slots the subset's
/// referenced difficulty is at least `(1−σ)·φ` of the total. Inputs are per
/// slot of the referencing block. A window of `2W` or more slots splits into
/// windows of length in `[W, 2W)`, and the inequality is preserved under sums,
/// so only those lengths are scanned. Returns the worst violating window.
pub fn fairness_check(total: &[f64], subset: &[f64], min_window: usize, phi: f64, sigma: f64) -> Option<FairnessViolation> {
    let n = total.len();
    if min_window == 0 || n < min_window {
        return None;
    }
    let mut pt = vec![0.0; n + 1];
    let mut ps = vec![0.0; n + 1];
    for i in 0..n {
        pt[i + 1] = pt[i] + total[i];
        ps[i + 1] = ps[i] + subset[i];
    }
    let need = (1.0 - sigma) * phi;
    let mut worst: Option<FairnessViolation> = None;
    for start in 0..n {
        for len in min_window..(2 * min_window).min(n - start + 1) {
            let d = pt[start + len] - pt[start];
            let s = ps[start + len] - ps[start];
            if d <= 0.0 || s >= need * d {
                continue;
            }
            let share = s / d;
            if worst.as_ref().is_none_or(|w| share < w.subset_share) {
                worst = Some(FairnessViolation { window: (start as Slot + 1, (start + len) as Slot), subset_share: share, required: need });
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Block, PowBlock};
    use crate::lottery::LotteryProof;
    use crate::stake::ratio;

    fn params(epoch_len: u64, kappa: u64) -> ProtocolParams {
        ProtocolParams::with_defaults(epoch_len, kappa, 1, 1.0, 0.5, 0.5, 10)
    }

    #[test]
    fn target_examples() {
        let p = params(100, 10);
        let mut tally = DifficultyTally::default();
        for _ in 0..100 {
            tally.record(PartyId(0), Target::new(0.5).unwrap());
        }
        // D = 200, f_w R / D = 0.5
        let out = target_from_tally(3, &p, 1.0, &tally, None);
        assert_eq!(out.target.value(), 0.5);
        // D = f_w R at the current target: unchanged
        let mut tally = DifficultyTally::default();
        for _ in 0..100 {
            tally.record(PartyId(1), Target::new(0.1).unwrap());
        }
        assert_eq!(target_from_tally(3, &p, 1.0, &tally, None).target.value(), 0.1);
        assert_eq!(target_from_tally(1, &p, 4.0, &tally, None).target.value(), 0.25);
        let held = target_from_tally(5, &p, 4.0, &DifficultyTally::default(), Target::new(0.3));
        assert!(held.held);
        assert_eq!(held.target.value(), 0.3);
        // epoch 2 normalizes by R − κ
        let mut tally = DifficultyTally::default();
        for _ in 0..45 {
            tally.record(PartyId(0), Target::new(0.5).unwrap());
        }
        assert_eq!(target_from_tally(2, &p, 1.0, &tally, None).target.value(), 1.0);
    }

    #[test]
    fn good_epoch_examples() {
        let mut p = params(100, 10);
        assert!(good_epoch(10.0, 0.1, &p));
        p.delta_good = 0.5;
        p.f_w = 1.0;
        assert!(!good_epoch(4.0, 0.1, &p));
        assert!(good_epoch(1.5, 1.0, &p));
    }

    #[test]
    fn weight_schedule_reports_both_bounds_at_transition() {
        let p = params(100, 10);
        let s = WeightSchedule { default: 0.5, overrides: BTreeMap::from([(6, 0.4)]) };
        let (w, c) = weight_schedule(5, &s, &p);
        assert_eq!(w, 0.5);
        assert_eq!(c.epoch, 4);
        assert_eq!(c.omegas, vec![0.5, 0.4]);
        let (w, c) = weight_schedule(8, &s, &p);
        assert_eq!((w, c.omegas.len()), (0.4, 1));
        assert_eq!(weight_schedule(3, &WeightSchedule::constant(0.2), &p).0, 0.2);
    }

    /// Builds a chain in which epoch 1 references PoW blocks by two miners in the
    /// given ratio, then extends it past the epoch-3 pivot.
    fn alice_store() -> (Arc<Setup>, BlockStore, PosIdx) {
        let p = ProtocolParams::with_defaults(30, 5, 1, 1.0, 0.5, 0.5, 5);
        let actual = StakeDistribution::try_from_iter([(PartyId(0), ratio(1, 10)), (PartyId(1), ratio(9, 10))]).unwrap();
        let setup = Arc::new(Setup::new(p, 9, actual, 10.0));
        let mut store = BlockStore::new((*setup.genesis).clone());
        let mut parent = setup.genesis.clone();
        let target = Target::new(0.1).unwrap();
        let mut nonce = 0;
        for slot in 1..=60u64 {
            let mut refs = Vec::new();
            if slot <= 10 {
                for miner in [0, 1, 1, 1, 1] {
                    let w = PowBlock::new(PartyId(miner), slot, parent.id, vec![], nonce, target);
                    nonce += 1;
                    refs.push(w.id);
                    store.insert_block(Block::from(w));
                }
            }
            let b = PosBlock::new(slot, parent.id, PartyId(1), LotteryProof::genesis(), Digest::tagged(b"c", &slot.to_le_bytes()), refs);
            store.insert_block(Block::from(b.clone()));
            parent = Arc::new(b);
        }
        let tip = store.pos_idx(&parent.id).unwrap();
        (setup, store, tip)
    }

    #[test]
    fn alice_virtual_share_is_exact() {
        let (setup, store, tip) = alice_store();
        let mut engine = EpochEngine::new(setup.clone());
        let ctx = engine.context(&store, tip, 3);
        assert_eq!(ctx.shares.get(PartyId(0)), ratio(3, 20));
        assert!(ctx.work_referenced);
        assert_eq!(engine.context(&store, tip, 1).shares.get(PartyId(0)), ratio(1, 10));
        let chain = store.chain(tip);
        let ws = work_stake_distribution(&chain, &store, 3, 30, 0.5, setup.actual.total()).unwrap();
        assert_eq!(ws.share(PartyId(0)), ratio(1, 5));
        assert_eq!(ws.total(), setup.actual.total());
        assert!(work_stake_distribution(&chain, &store, 2, 30, 0.5, setup.actual.total()).is_err());
    }

    #[test]
    fn engine_matches_chain_functions() {
        let (setup, store, tip) = alice_store();
        let mut engine = EpochEngine::new(setup.clone());
        let chain = store.chain(tip);
        let mut prev = None;
        for e in 1..=3 {
            let ctx = engine.context(&store, tip, e);
            let outcome = adjust_target(&chain, &store, e, &setup.params, setup.h1_estimate, prev).unwrap();
            assert_eq!(ctx.target, outcome.target, "epoch {e}");
            prev = Some(ctx.target);
        }
        // epoch 2 window is slots 1..=25: 50 blocks at τ = 0.1 → D = 500, τ₂ = 25/500
        assert_eq!(engine.context(&store, tip, 2).target.value(), 0.05);
        // epoch 3 window is slots 26..=55: no references, target held
        assert!(engine.context(&store, tip, 3).target_held);
    }

    #[test]
    fn typicality_examples() {
        let mut p = params(100, 10);
        p.epsilon = 0.5;
        p.delta_good = 0.5;
        p.lambda = 0.1;
        let ell = p.ell().unwrap();
        let steady =
            SlotMining { honest_queries: 10, honest_difficulty: 10.0, subset_queries: 2, subset_difficulty: 2.0, adversarial_queries: 1, ..Default::default() };
        let trace = vec![steady; 200];
        assert!(typicality_check(&trace, ell, &p, Some(0.2)).unwrap().is_empty());
        let idle = vec![SlotMining { honest_queries: 10, ..Default::default() }; 50];
        assert!(!typicality_check(&idle, ell, &p, None).unwrap().iter().any(|v| v.clause == TypicalityClause::A));
        let mut burst = trace.clone();
        for s in burst.iter_mut().take(50) {
            s.adversarial_difficulty = 10.0 * 10.0;
        }
        let v = typicality_check(&burst, ell, &p, None).unwrap();
        assert!(v.iter().any(|v| v.clause == TypicalityClause::B));
        assert!(matches!(typicality_check(&trace, ell - 1, &p, None), Err(EpochError::WindowTooShort { .. })));
    }

    #[test]
    fn fairness_check_finds_starved_window() {
        let total = vec![1.0; 100];
        let fair: Vec<f64> = (0..100).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        assert!(fairness_check(&total, &fair, 20, 0.2, 0.2).is_none());
        let mut starved = fair.clone();
        for s in starved.iter_mut().skip(40).take(30) {
            *s = 0.0;
        }
        let v = fairness_check(&total, &starved, 20, 0.2, 0.2).unwrap();
        assert_eq!(v.subset_share, 0.0);
        assert!(v.window.0 > 35 && v.window.1 <= 75);
    }
}
