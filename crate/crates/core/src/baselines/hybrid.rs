use serde::{Deserialize, Serialize};

use crate::ledger::{Digest, PartyId, Slot, Target};
use crate::lottery::{praos_leader_check, PowOracle, Prf};
use crate::stake::StakeDistribution;

/// Fixed-weight hybrid: PoW and PoS blocks extend one longest chain at rates
/// `ω·f` and `(1−ω)·f` against known totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticHybridConfig {
    pub omega: f64,
    pub f: f64,
    pub queries: u64,
    pub stakeholders: u32,
    pub slots: Slot,
    pub seed: u64,
}

impl Default for StaticHybridConfig {
    fn default() -> Self {
        StaticHybridConfig { omega: 0.5, f: 0.05, queries: 100, stakeholders: 10, slots: 100_000, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StaticHybridOutcome {
    pub pow_blocks: u64,
    pub pos_blocks: u64,
    pub height: u64,
}

pub fn static_hybrid(cfg: &StaticHybridConfig) -> StaticHybridOutcome {
    let prf = Prf::new(cfg.seed);
    let oracle = PowOracle::new(cfg.seed);
    let stake = StakeDistribution::from_f64((0..cfg.stakeholders).map(|i| (PartyId(i), 1.0))).expect("positive stake");
    let shares = stake.shares_f64();
    let f_s = (1.0 - cfg.omega) * cfg.f;
    let pow_target = (cfg.queries > 0 && cfg.omega > 0.0).then(|| Target::clamped(cfg.omega * cfg.f / cfg.queries as f64));
    let nonce = Digest::tagged(b"HYBRID-NONCE", &cfg.seed.to_le_bytes());
    let mut out = StaticHybridOutcome::default();
    let mut tip = nonce;
    let mut next_nonce = 0u64;
    for slot in 1..=cfg.slots {
        if let Some(target) = pow_target {
            let key = oracle.header_key(PartyId(u32::MAX), slot, &tip, &Digest::ZERO);
            let found = (0..cfg.queries).any(|i| PowOracle::succeeds(key, next_nonce + i, target));
            next_nonce += cfg.queries;
            if found {
                out.pow_blocks += 1;
                out.height += 1;
                tip = Digest::tagged(b"HYBRID-POW", &[tip.0.as_slice(), &slot.to_le_bytes()].concat());
            }
        }
        if f_s > 0.0 && shares.iter().any(|&(p, a)| praos_leader_check(&prf, p, slot, &nonce, a, f_s).is_some()) {
            out.pos_blocks += 1;
            out.height += 1;
            tip = Digest::tagged(b"HYBRID-POS", &[tip.0.as_slice(), &slot.to_le_bytes()].concat());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_mix_follows_weight() {
        for omega in [0.25, 0.5, 0.75] {
            let out = static_hybrid(&StaticHybridConfig { omega, ..Default::default() });
            let share = out.pow_blocks as f64 / out.height as f64;
            assert!((share - omega).abs() < 0.05 * omega.max(1.0 - omega), "{omega} {out:?}");
        }
    }

    #[test]
    fn extreme_weights_are_single_resource() {
        let pos = static_hybrid(&StaticHybridConfig { omega: 0.0, slots: 5_000, ..Default::default() });
        assert_eq!(pos.pow_blocks, 0);
        assert!(pos.pos_blocks > 0);
        let pow = static_hybrid(&StaticHybridConfig { omega: 1.0, slots: 5_000, ..Default::default() });
        assert_eq!(pow.pos_blocks, 0);
        assert!(pow.pow_blocks > 0);
    }
}
