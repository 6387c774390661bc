//! Protocol and analysis parameters, and the deterministic parameter checks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{EpochIndex, Slot};

const REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{name} = {value} is outside {range}")]
    Domain { name: &'static str, value: f64, range: &'static str },
    #[error("schedule entry {index} is not positive")]
    NonPositive { index: usize },
    #[error("schedules have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("slot {slot}: honest queries {honest} exceed total {total}")]
    HonestExceedsTotal { slot: usize, honest: u64, total: u64 },
    #[error("slot {slot}: honest queries {honest} fall below the floor of total {total}")]
    BelowFloor { slot: usize, honest: u64, total: u64 },
    #[error("epoch length {epoch_len} must be at least 3·kappa = {}", 3 * kappa)]
    KappaTooLarge { epoch_len: u64, kappa: u64 },
}

fn check(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), ParamError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::Domain { name, value, range })
    }
}

fn le(a: f64, b: f64) -> bool {
    a <= b || (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    /// Epoch length in slots.
    pub epoch_len: u64,
    pub kappa: u64,
    pub delta_net: u64,
    /// Expected PoW blocks per slot.
    pub f_w: f64,
    /// Active-slot coefficient of the PoS lottery.
    pub f_s: f64,
    pub omega: f64,
    /// Rollback bound of the chain-selection rule, in blocks.
    pub k_cp: u64,
    pub sl_re: u64,
    pub s_bg: u64,
    pub gamma: f64,
    pub alpha0: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta_good: f64,
    pub lambda: f64,
    pub epochs: u64,
}

impl ProtocolParams {
    /// Parameters with `sl_re = 3κ + Δ`, `σ = 4ε` and `k_cp = κ`.
    pub fn with_defaults(epoch_len: u64, kappa: u64, delta_net: u64, f_w: f64, f_s: f64, omega: f64, epochs: u64) -> Self {
        ProtocolParams {
            epoch_len,
            kappa,
            delta_net,
            f_w,
            f_s,
            omega,
            k_cp: kappa,
            sl_re: 3 * kappa + delta_net,
            s_bg: epoch_len,
            gamma: 1.0,
            alpha0: 1.0,
            sigma: 0.2,
            epsilon: 0.05,
            delta_good: 0.2,
            lambda: 1.0,
            epochs,
        }
    }

    /// Range checks that every run needs, independent of the analysis conditions.
    pub fn check_structure(&self) -> Result<(), ParamError> {
        check("epoch_len", self.epoch_len as f64, self.epoch_len > 0, "positive integers")?;
        check("kappa", self.kappa as f64, self.kappa > 0, "positive integers")?;
        check("f_w", self.f_w, self.f_w > 0.0, "(0, inf)")?;
        check("f_s", self.f_s, self.f_s > 0.0 && self.f_s < 1.0, "(0, 1)")?;
        check("omega", self.omega, (0.0..=1.0).contains(&self.omega), "[0, 1]")?;
        check("k_cp", self.k_cp as f64, self.k_cp > 0, "positive integers")?;
        check("sl_re", self.sl_re as f64, self.sl_re > 0, "positive integers")?;
        check("s_bg", self.s_bg as f64, self.s_bg > 0, "positive integers")?;
        check("gamma", self.gamma, self.gamma >= 1.0, "[1, inf)")?;
        check("alpha0", self.alpha0, self.alpha0 > 0.0 && self.alpha0 <= 1.0, "(0, 1]")?;
        check("sigma", self.sigma, self.sigma > 0.0 && self.sigma < 0.5, "(0, 1/2)")?;
        check("epsilon", self.epsilon, self.epsilon > 0.0 && self.epsilon < 1.0, "(0, 1)")?;
        check("delta_good", self.delta_good, self.delta_good > 0.0 && self.delta_good <= 1.0, "(0, 1]")?;
        check("lambda", self.lambda, self.lambda >= 0.0, "[0, inf)")?;
        check("epochs", self.epochs as f64, self.epochs > 0, "positive integers")?;
        if 3 * self.kappa > self.epoch_len {
            return Err(ParamError::KappaTooLarge { epoch_len: self.epoch_len, kappa: self.kappa });
        }
        Ok(())
    }

    pub fn ell(&self) -> Result<u64, ParamError> {
        compute_ell(self.epsilon, self.gamma, self.delta_good, self.alpha0, self.f_w, self.lambda)
    }

    pub fn epoch_of(&self, slot: Slot) -> EpochIndex {
        epoch_of(slot, self.epoch_len)
    }

    pub fn total_slots(&self) -> u64 {
        self.epochs * self.epoch_len
    }

    /// Minimum fairness window `ℓ/α₀ + 3κ + Δ`.
    pub fn fairness_window(&self) -> Result<u64, ParamError> {
        let ell = self.ell()? as f64;
        Ok((ell / self.alpha0).ceil() as u64 + 3 * self.kappa + self.delta_net)
    }
}

/// Epoch containing `slot`; slot 0 (genesis) is reported as epoch 1.
pub fn epoch_of(slot: Slot, epoch_len: u64) -> EpochIndex {
    if slot == 0 {
        1
    } else {
        (slot - 1) / epoch_len + 1
    }
}

pub fn epoch_start(epoch: EpochIndex, epoch_len: u64) -> Slot {
    (epoch - 1) * epoch_len + 1
}

/// `⌈2(1+ε/3)λ / (ε²γ³(1−δ)α₀f)⌉`.
pub fn compute_ell(epsilon: f64, gamma: f64, delta_good: f64, alpha0: f64, f_w: f64, lambda: f64) -> Result<u64, ParamError> {
    check("epsilon", epsilon, epsilon > 0.0 && epsilon < 1.0, "(0, 1)")?;
    check("gamma", gamma, gamma >= 1.0, "[1, inf)")?;
    check("delta_good", delta_good, delta_good > 0.0 && delta_good < 1.0, "(0, 1)")?;
    check("alpha0", alpha0, alpha0 > 0.0 && alpha0 <= 1.0, "(0, 1]")?;
    check("f_w", f_w, f_w > 0.0, "(0, inf)")?;
    check("lambda", lambda, lambda >= 0.0, "[0, inf)")?;
    let value = 2.0 * (1.0 + epsilon / 3.0) * lambda / (epsilon * epsilon * gamma.powi(3) * (1.0 - delta_good) * alpha0 * f_w);
    // Absorb rounding noise before taking the ceiling.
    let nearest = value.round();
    if (value - nearest).abs() <= REL_TOL * value.max(1.0) {
        return Ok(nearest as u64);
    }
    Ok(value.ceil() as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Condition {
    /// `R − 3κ − Δ ≥ ℓ/α₀`.
    C1EpochRoom,
    /// `ℓ/α₀ ≥ (γ/ε)(4κ + Δ)`.
    C1WindowFloor,
    /// `4ε ≤ δ`.
    C2,
    /// `sl_re = 3κ + Δ`.
    RecencyDefault,
    /// ℓ is undefined for these inputs.
    EllUndefined(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionViolation {
    pub condition: Condition,
    pub lhs: f64,
    pub rhs: f64,
}

/// Lists every violated analysis inequality; empty means all hold.
pub fn validate_conditions(p: &ProtocolParams) -> Vec<ConditionViolation> {
    let mut out = Vec::new();
    if !le(4.0 * p.epsilon, p.delta_good) || p.delta_good > 1.0 {
        out.push(ConditionViolation { condition: Condition::C2, lhs: 4.0 * p.epsilon, rhs: p.delta_good });
    }
    let recency = (3 * p.kappa + p.delta_net) as f64;
    if p.sl_re as f64 != recency {
        out.push(ConditionViolation { condition: Condition::RecencyDefault, lhs: p.sl_re as f64, rhs: recency });
    }
    match p.ell() {
        Ok(ell) => {
            let window = ell as f64 / p.alpha0;
            let room = p.epoch_len as f64 - (3 * p.kappa + p.delta_net) as f64;
            if !le(window, room) {
                out.push(ConditionViolation { condition: Condition::C1EpochRoom, lhs: room, rhs: window });
            }
            let floor = p.gamma / p.epsilon * (4 * p.kappa + p.delta_net) as f64;
            if !le(floor, window) {
                out.push(ConditionViolation { condition: Condition::C1WindowFloor, lhs: window, rhs: floor });
            }
        }
        Err(e) => out.push(ConditionViolation { condition: Condition::EllUndefined(e.to_string()), lhs: f64::NAN, rhs: f64::NAN }),
    }
    out
}

/// Sliding-window maximum and minimum over windows of exactly `w` entries.
fn window_extrema(values: &[f64], w: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    (0..values.len()).filter_map(move |i| {
        while maxq.back().is_some_and(|&j| values[j] <= values[i]) {
            maxq.pop_back();
        }
        while minq.back().is_some_and(|&j| values[j] >= values[i]) {
            minq.pop_back();
        }
        maxq.push_back(i);
        minq.push_back(i);
        if i + 1 < w {
            return None;
        }
        while maxq.front().is_some_and(|&j| j + w <= i) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&j| j + w <= i) {
            minq.pop_front();
        }
        Some((values[maxq[0]], values[minq[0]]))
    })
}

/// Whether every window of at most `s` consecutive entries has `max ≤ γ·min`.
pub fn is_gamma_s_respecting(sequence: &[f64], gamma: f64, s: usize) -> Result<bool, ParamError> {
    if let Some(index) = sequence.iter().position(|&v| v.is_nan() || v <= 0.0) {
        return Err(ParamError::NonPositive { index });
    }
    check("gamma", gamma, gamma >= 1.0, "[1, inf)")?;
    check("s", s as f64, s >= 1, "positive integers")?;
    if sequence.is_empty() {
        return Ok(true);
    }
    // Shorter windows are contained in longer ones, so windows of exactly
    // min(s, len) entries cover every case.
    let w = s.min(sequence.len());
    Ok(window_extrema(sequence, w).all(|(max, min)| le(max, gamma * min)))
}

/// `ω·max_W β_w + (1−ω)·max_W β_s ≤ θ` for every window of at most `m` slots.
pub fn is_theta_bounded(adv: &AdversarySchedule, theta: f64, m: usize, omega: f64) -> Result<bool, ParamError> {
    adv.check()?;
    check("m", m as f64, m >= 1, "positive integers")?;
    check("omega", omega, (0.0..=1.0).contains(&omega), "[0, 1]")?;
    let n = adv.beta_w.len();
    if n == 0 {
        return Ok(true);
    }
    let w = m.min(n);
    let worst = window_extrema(&adv.beta_w, w).zip(window_extrema(&adv.beta_s, w)).map(|((bw, _), (bs, _))| {
        let work = if omega == 0.0 { 0.0 } else { omega * bw };
        let stake = if omega == 1.0 { 0.0 } else { (1.0 - omega) * bs };
        work + stake
    });
    let mut ok = true;
    for v in worst {
        ok &= le(v, theta);
    }
    Ok(ok)
}

/// Honest and total PoW query counts per slot (index 0 is slot 1).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticipationSchedule {
    pub honest: Vec<u64>,
    pub total: Vec<u64>,
}

impl ParticipationSchedule {
    pub fn constant(slots: usize, honest: u64, total: u64) -> Self {
        ParticipationSchedule { honest: vec![honest; slots], total: vec![total; slots] }
    }

    /// Honest queries halve at every epoch boundary (integer division).
    pub fn halving(epochs: u64, epoch_len: u64, initial_honest: u64, adversarial: u64) -> Self {
        let mut honest = Vec::with_capacity((epochs * epoch_len) as usize);
        for e in 0..epochs {
            let h = initial_honest >> e.min(63);
            honest.extend(std::iter::repeat_n(h, epoch_len as usize));
        }
        let total = honest.iter().map(|h| h + adversarial).collect();
        ParticipationSchedule { honest, total }
    }

    pub fn len(&self) -> usize {
        self.honest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.honest.is_empty()
    }

    pub fn honest_at(&self, slot: Slot) -> u64 {
        self.honest.get(slot as usize - 1).copied().unwrap_or(0)
    }

    pub fn total_at(&self, slot: Slot) -> u64 {
        self.total.get(slot as usize - 1).copied().unwrap_or(0)
    }

    pub fn adversarial_at(&self, slot: Slot) -> u64 {
        self.total_at(slot) - self.honest_at(slot)
    }

    /// Checks `h_r ≤ n_r` and, when `alpha0` is given, `h_r ≥ α₀·n_r`.
    pub fn check(&self, alpha0: Option<f64>) -> Result<(), ParamError> {
        if self.honest.len() != self.total.len() {
            return Err(ParamError::LengthMismatch(self.honest.len(), self.total.len()));
        }
        for (slot, (&h, &n)) in self.honest.iter().zip(&self.total).enumerate() {
            if h > n {
                return Err(ParamError::HonestExceedsTotal { slot: slot + 1, honest: h, total: n });
            }
            if let Some(a) = alpha0 {
                if !le(a * n as f64, h as f64) {
                    return Err(ParamError::BelowFloor { slot: slot + 1, honest: h, total: n });
                }
            }
        }
        Ok(())
    }
}

/// Per-slot adversarial stake and work fractions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversarySchedule {
    pub beta_s: Vec<f64>,
    pub beta_w: Vec<f64>,
}

impl AdversarySchedule {
    pub fn constant(slots: usize, beta_s: f64, beta_w: f64) -> Self {
        AdversarySchedule { beta_s: vec![beta_s; slots], beta_w: vec![beta_w; slots] }
    }

    pub fn check(&self) -> Result<(), ParamError> {
        if self.beta_s.len() != self.beta_w.len() {
            return Err(ParamError::LengthMismatch(self.beta_s.len(), self.beta_w.len()));
        }
        for (name, seq) in [("beta_s", &self.beta_s), ("beta_w", &self.beta_w)] {
            for &v in seq.iter() {
                check(name, v, (0.0..=1.0).contains(&v), "[0, 1]")?;
            }
        }
        Ok(())
    }

    pub fn slice(&self, lo: usize, hi: usize) -> AdversarySchedule {
        let hi = hi.min(self.beta_s.len());
        let lo = lo.min(hi);
        AdversarySchedule { beta_s: self.beta_s[lo..hi].to_vec(), beta_w: self.beta_w[lo..hi].to_vec() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ell_example() {
        // 2 * (1 + 0.1/3) / (0.01 * 0.6) = 344.44.., evaluated with exact fractions
        let exact: f64 = 2.0 * (31.0 / 30.0) / (1.0 / 100.0 * 3.0 / 5.0);
        assert_eq!(compute_ell(0.1, 1.0, 0.4, 1.0, 1.0, 1.0).unwrap(), exact.ceil() as u64);
        assert_eq!(compute_ell(0.1, 1.0, 0.4, 1.0, 1.0, 1.0).unwrap(), 345);
        assert_eq!(compute_ell(0.1, 1.0, 0.4, 1.0, 1.0, 0.0).unwrap(), 0);
        assert!(compute_ell(0.1, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(compute_ell(0.1, 1.0, 0.4, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn ell_is_linear_in_lambda_before_ceiling() {
        let raw = |l: f64| 2.0 * (1.0 + 0.05 / 3.0) * l / (0.05 * 0.05 * 0.8 * 0.5 * 2.0);
        for l in [0.5, 1.0, 3.7] {
            assert!((raw(2.0 * l) - 2.0 * raw(l)).abs() < 1e-9);
            assert_eq!(compute_ell(0.05, 1.0, 0.2, 0.5, 2.0, l).unwrap(), raw(l).ceil() as u64);
        }
    }

    fn base() -> ProtocolParams {
        let mut p = ProtocolParams::with_defaults(1000, 10, 1, 1.0, 0.1, 0.5, 10);
        p.epsilon = 0.1;
        p.delta_good = 0.4;
        p
    }

    #[test]
    fn conditions() {
        let mut p = base();
        p.epsilon = 0.3;
        p.delta_good = 1.0;
        assert!(validate_conditions(&p).iter().any(|v| v.condition == Condition::C2));

        // ℓ = 345: C1 needs R ≥ 345 + 31 and 345 ≥ 10·41.
        let mut p = base();
        p.kappa = 8;
        p.sl_re = 25;
        let ell = p.ell().unwrap();
        assert!(ell as f64 >= 10.0 * (4.0 * 8.0 + 1.0));
        p.epoch_len = ell + 3 * 8 + 1;
        assert_eq!(validate_conditions(&p), vec![]);

        let mut p = base();
        p.epoch_len = 3 * p.kappa + p.delta_net;
        assert!(validate_conditions(&p).iter().any(|v| v.condition == Condition::C1EpochRoom));
        assert_eq!(validate_conditions(&p), validate_conditions(&p.clone()));
    }

    #[test]
    fn gamma_s_examples() {
        assert!(is_gamma_s_respecting(&[3.0; 10], 1.0, 4).unwrap());
        assert!(is_gamma_s_respecting(&[4.0, 2.0, 1.0], 2.0, 2).unwrap());
        assert!(!is_gamma_s_respecting(&[4.0, 2.0, 1.0], 2.0, 3).unwrap());
        assert!(!is_gamma_s_respecting(&[1.0, 3.0], 2.0, 2).unwrap());
        assert!(is_gamma_s_respecting(&[1.0, 0.0], 2.0, 2).is_err());
    }

    #[test]
    fn theta_examples() {
        let zero = AdversarySchedule::constant(10, 0.0, 0.0);
        assert!(is_theta_bounded(&zero, 0.0, 3, 0.5).unwrap());
        let s = AdversarySchedule::constant(10, 0.3, 0.6);
        assert!(is_theta_bounded(&s, 0.45, 3, 0.5).unwrap());
        assert!(!is_theta_bounded(&s, 0.44, 3, 0.5).unwrap());
        let heavy_stake = AdversarySchedule::constant(5, 1.0, 0.2);
        assert!(is_theta_bounded(&heavy_stake, 0.2, 2, 1.0).unwrap());
    }

    #[test]
    fn halving_schedule_is_two_respecting() {
        let sched = ParticipationSchedule::halving(4, 5, 64, 0);
        let seq: Vec<f64> = sched.honest.iter().map(|&h| h as f64).collect();
        assert!(is_gamma_s_respecting(&seq, 2.0, 5).unwrap());
        assert!(!is_gamma_s_respecting(&seq, 2.0, 7).unwrap());
        assert!(!is_gamma_s_respecting(&seq, 1.5, 5).unwrap());
        assert!(sched.check(Some(1.0)).is_ok());
    }

    #[test]
    fn schedule_checks() {
        let bad = ParticipationSchedule { honest: vec![3], total: vec![2] };
        assert!(matches!(bad.check(None), Err(ParamError::HonestExceedsTotal { .. })));
        let floor = ParticipationSchedule { honest: vec![1], total: vec![4] };
        assert!(floor.check(None).is_ok());
        assert!(matches!(floor.check(Some(0.5)), Err(ParamError::BelowFloor { .. })));
    }

    fn brute_gamma(seq: &[f64], gamma: f64, s: usize) -> bool {
        (0..seq.len()).all(|i| {
            (i..seq.len().min(i + s)).all(|j| {
                let w = &seq[i..=j];
                let max = w.iter().cloned().fold(f64::MIN, f64::max);
                let min = w.iter().cloned().fold(f64::MAX, f64::min);
                max <= gamma * min
            })
        })
    }

    proptest! {
        #[test]
        fn gamma_s_matches_brute_force_and_is_monotone(
            seq in prop::collection::vec(1u32..20, 1..30),
            gamma in 1.0f64..4.0,
            s in 1usize..12,
        ) {
            let seq: Vec<f64> = seq.into_iter().map(f64::from).collect();
            let fast = is_gamma_s_respecting(&seq, gamma, s).unwrap();
            prop_assert_eq!(fast, brute_gamma(&seq, gamma, s));
            if fast {
                prop_assert!(is_gamma_s_respecting(&seq, gamma + 0.5, s).unwrap());
                prop_assert!(is_gamma_s_respecting(&seq, gamma, s.saturating_sub(1).max(1)).unwrap());
            }
        }

        #[test]
        fn theta_is_monotone(
            bs in prop::collection::vec(0.0f64..=1.0, 1..20),
            bw in prop::collection::vec(0.0f64..=1.0, 1..20),
            theta in 0.0f64..1.0,
            m in 1usize..8,
            omega in 0.0f64..=1.0,
        ) {
            let n = bs.len().min(bw.len());
            let adv = AdversarySchedule { beta_s: bs[..n].to_vec(), beta_w: bw[..n].to_vec() };
            if is_theta_bounded(&adv, theta, m, omega).unwrap() {
                prop_assert!(is_theta_bounded(&adv, theta + 0.1, m, omega).unwrap());
                prop_assert!(is_theta_bounded(&adv, theta, (m - 1).max(1), omega).unwrap());
            }
        }
    }
}
