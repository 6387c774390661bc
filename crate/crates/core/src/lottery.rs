//! Mining and leader-election randomness.
//!
//! Every draw is a keyed pseudo-random function of a scenario seed and the
//! query coordinates, so replays are bit-exact. Domain tags separate the PoS
//! leader test, nonce contributions, classic single-leader draws and PoW.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::ledger::digest::{DecodeError, Decoder, Digest, Encoder};
use crate::ledger::{Chain, EpochIndex, PartyId, PowBlock, Slot, Target};
use crate::stake::StakeDistribution;

pub const TAG_TEST: &[u8] = b"TEST";
pub const TAG_NONCE: &[u8] = b"NONCE";
pub const TAG_POW: &[u8] = b"POW";
pub const TAG_CLASSIC: &[u8] = b"CLASSIC";
const TAG_EPOCH_NONCE: &[u8] = b"EPOCH-NONCE";

#[derive(Debug, Error, PartialEq)]
pub enum LotteryError {
    #[error("adversarial query budget exhausted")]
    BudgetExhausted,
    #[error("{name} = {value} is outside {range}")]
    Domain { name: &'static str, value: f64, range: &'static str },
    #[error("leader distribution is empty or has zero total")]
    EmptyDistribution,
    #[error("chain only reaches slot {have}; epoch {epoch} nonce needs slot {need}")]
    ChainTooShort { epoch: EpochIndex, have: Slot, need: Slot },
}

/// Maps the top 53 bits of a draw to `[0, 1)`.
pub fn unit_interval(draw: u64) -> f64 {
    (draw >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Keyed PRF standing in for VRF evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prf {
    key: Digest,
}

impl Prf {
    pub fn new(seed: u64) -> Prf {
        Prf { key: Digest::tagged(b"PRF-KEY", &seed.to_le_bytes()) }
    }

    pub fn eval(&self, tag: &[u8], party: PartyId, slot: Slot, nonce: &Digest) -> Digest {
        let mut h = Sha256::new();
        h.update(self.key.0);
        h.update((tag.len() as u32).to_le_bytes());
        h.update(tag);
        h.update(party.0.to_le_bytes());
        h.update(slot.to_le_bytes());
        h.update(nonce.0);
        Digest(h.finalize().into())
    }
}

/// Evidence that `party` won the leader lottery at `slot`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotteryProof {
    pub party: PartyId,
    pub slot: Slot,
    pub draw: u64,
    pub threshold: f64,
}

impl LotteryProof {
    pub fn genesis() -> LotteryProof {
        LotteryProof { party: PartyId::GENESIS, slot: 0, draw: 0, threshold: 0.0 }
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.u32(self.party.0).u64(self.slot).u64(self.draw).f64(self.threshold);
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(LotteryProof { party: PartyId(d.u32()?), slot: d.u64()?, draw: d.u64()?, threshold: d.f64()? })
    }
}

/// `φ_f(α) = 1 − (1 − f)^α`.
pub fn phi(f_s: f64, alpha: f64) -> Result<f64, LotteryError> {
    if !(f_s > 0.0 && f_s < 1.0) {
        return Err(LotteryError::Domain { name: "f_s", value: f_s, range: "(0, 1)" });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LotteryError::Domain { name: "alpha", value: alpha, range: "[0, 1]" });
    }
    Ok(-(alpha * (-f_s).ln_1p()).exp_m1())
}

fn leader_draw(prf: &Prf, party: PartyId, slot: Slot, nonce: &Digest) -> u64 {
    prf.eval(TAG_TEST, party, slot, nonce).prefix_u64()
}

/// Independent per-party leader test: wins iff the draw falls below `φ_f(α)`.
pub fn praos_leader_check(prf: &Prf, party: PartyId, slot: Slot, nonce: &Digest, alpha: f64, f_s: f64) -> Option<LotteryProof> {
    let threshold = phi(f_s, alpha.clamp(0.0, 1.0)).ok()?;
    let draw = leader_draw(prf, party, slot, nonce);
    (unit_interval(draw) < threshold).then_some(LotteryProof { party, slot, draw, threshold })
}

/// Recomputes the draw and threshold of a Praos proof.
pub fn verify_praos(prf: &Prf, proof: &LotteryProof, nonce: &Digest, alpha: f64, f_s: f64) -> bool {
    let Ok(threshold) = phi(f_s, alpha.clamp(0.0, 1.0)) else { return false };
    proof.threshold == threshold && proof.draw == leader_draw(prf, proof.party, proof.slot, nonce) && unit_interval(proof.draw) < threshold
}

/// Single leader per slot, sampled proportionally to stake.
pub fn classic_leader(prf: &Prf, slot: Slot, nonce: &Digest, dist: &StakeDistribution) -> Result<PartyId, LotteryError> {
    let shares = dist.shares_f64();
    let total: f64 = shares.iter().map(|(_, s)| s).sum();
    if shares.is_empty() || total <= 0.0 {
        return Err(LotteryError::EmptyDistribution);
    }
    let u = unit_interval(prf.eval(TAG_CLASSIC, PartyId(0), slot, nonce).prefix_u64()) * total;
    let mut acc = 0.0;
    let mut last = None;
    for (party, share) in shares {
        if share <= 0.0 {
            continue;
        }
        acc += share;
        last = Some(party);
        if u < acc {
            return Ok(party);
        }
    }
    last.ok_or(LotteryError::EmptyDistribution)
}

/// Proof for a classic-mode leader; the threshold slot carries the draw position.
pub fn classic_proof(prf: &Prf, party: PartyId, slot: Slot, nonce: &Digest) -> LotteryProof {
    let draw = prf.eval(TAG_CLASSIC, PartyId(0), slot, nonce).prefix_u64();
    LotteryProof { party, slot, draw, threshold: 1.0 }
}

pub fn nonce_contribution(prf: &Prf, party: PartyId, slot: Slot, nonce: &Digest) -> Digest {
    prf.eval(TAG_NONCE, party, slot, nonce)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochNonce {
    pub epoch: EpochIndex,
    pub value: Digest,
}

/// Last slot whose nonce contribution feeds the nonce of `epoch`.
pub fn nonce_window(epoch: EpochIndex, epoch_len: u64) -> (Slot, Slot) {
    debug_assert!(epoch >= 2);
    let start = (epoch - 2) * epoch_len + 1;
    (start, (epoch - 2) * epoch_len + (2 * epoch_len).div_ceil(3))
}

/// Mixes the contributions of the window blocks with the epoch index and the
/// previous nonce.
pub fn mix_epoch_nonce<'a>(epoch: EpochIndex, prev: &EpochNonce, contributions: impl IntoIterator<Item = &'a Digest>) -> EpochNonce {
    let mut e = Encoder::new();
    e.u64(epoch).digest(&prev.value);
    for c in contributions {
        e.digest(c);
    }
    EpochNonce { epoch, value: Digest::tagged(TAG_EPOCH_NONCE, e.as_slice()) }
}

/// Nonce of `epoch` on `chain` as observed at slot `now`.
pub fn derive_epoch_nonce(chain: &Chain, epoch: EpochIndex, epoch_len: u64, prev: &EpochNonce, now: Slot) -> Result<EpochNonce, LotteryError> {
    if epoch <= 1 {
        return Ok(genesis_nonce(chain));
    }
    let (lo, hi) = nonce_window(epoch, epoch_len);
    if now < hi {
        return Err(LotteryError::ChainTooShort { epoch, have: now, need: hi });
    }
    Ok(mix_epoch_nonce(epoch, prev, chain.segment(lo, hi).iter().map(|b| &b.nonce_contribution)))
}

pub fn genesis_nonce(chain: &Chain) -> EpochNonce {
    EpochNonce { epoch: 1, value: chain.genesis().nonce_contribution }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random-oracle abstraction for PoW queries.
///
/// The header prefix is hashed once per (miner, slot, anchor, merkle) and each
/// nonce is mixed into that key, so a miner with `h` queries per slot costs one
/// SHA-256 plus `h` cheap mixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PowOracle {
    key: Digest,
}

impl PowOracle {
    pub fn new(seed: u64) -> PowOracle {
        PowOracle { key: Digest::tagged(b"POW-KEY", &seed.to_le_bytes()) }
    }

    pub fn header_key(&self, miner: PartyId, slot: Slot, anchor: &Digest, merkle: &Digest) -> u64 {
        let mut e = Encoder::new();
        e.digest(&self.key).u32(miner.0).u64(slot).digest(anchor).digest(merkle);
        Digest::tagged(TAG_POW, e.as_slice()).prefix_u64()
    }

    pub fn draw(key: u64, nonce: u64) -> u64 {
        mix64(key ^ mix64(nonce.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    }

    pub fn succeeds(key: u64, nonce: u64, target: Target) -> bool {
        unit_interval(Self::draw(key, nonce)) < target.value()
    }

    pub fn verify(&self, block: &PowBlock) -> bool {
        let key = self.header_key(block.miner, block.slot_claimed, &block.anchor, &block.merkle());
        Self::succeeds(key, block.nonce, block.target)
    }
}

/// Query allowance for the adversary; honest miners get a fresh per-slot quota
/// from the participation schedule instead.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    adversarial: u64,
}

impl OracleBudget {
    /// One unit per corrupted-miner activation.
    pub fn grant(&mut self, queries: u64) {
        self.adversarial += queries;
    }

    pub fn remaining(&self) -> u64 {
        self.adversarial
    }

    /// Spends the whole balance at once.
    pub fn take_all(&mut self) -> u64 {
        std::mem::take(&mut self.adversarial)
    }

    pub fn spend(&mut self) -> Result<(), LotteryError> {
        self.adversarial = self.adversarial.checked_sub(1).ok_or(LotteryError::BudgetExhausted)?;
        Ok(())
    }
}

/// One adversarial oracle query; returns the winning nonce on success.
pub fn pow_query(budget: &mut OracleBudget, key: u64, nonce: u64, target: Target) -> Result<Option<u64>, LotteryError> {
    budget.spend()?;
    Ok(PowOracle::succeeds(key, nonce, target).then_some(nonce))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn phi_examples() {
        assert_eq!(phi(0.3, 0.0).unwrap(), 0.0);
        assert!((phi(0.3, 1.0).unwrap() - 0.3).abs() < 1e-15);
        // 1 - sqrt(0.9), evaluated independently
        let oracle = 1.0 - 0.9f64.sqrt();
        assert!((phi(0.1, 0.5).unwrap() - oracle).abs() < 1e-15);
        assert!((phi(0.1, 0.5).unwrap() - 0.05132).abs() < 1e-5);
        assert!(phi(1.0, 0.5).is_err());
        assert!(phi(0.5, 1.5).is_err());
    }

    #[test]
    fn pow_success_rate_and_certainty() {
        let oracle = PowOracle::new(7);
        let key = oracle.header_key(PartyId(1), 3, &Digest::ZERO, &Digest::ZERO);
        assert!((0..1000).all(|n| PowOracle::succeeds(key, n, Target::MAX)));
        let t = Target::new(0.25).unwrap();
        let hits = (0..100_000u64).filter(|&n| PowOracle::succeeds(key, n, t)).count();
        let rate = hits as f64 / 100_000.0;
        assert!((rate - 0.25).abs() < 0.005, "rate {rate}");
        assert_eq!(PowOracle::draw(key, 5), PowOracle::draw(key, 5));
    }

    #[test]
    fn budget_is_enforced() {
        let mut b = OracleBudget::default();
        assert_eq!(pow_query(&mut b, 1, 0, Target::MAX), Err(LotteryError::BudgetExhausted));
        b.grant(2);
        assert_eq!(pow_query(&mut b, 1, 0, Target::MAX), Ok(Some(0)));
        assert_eq!(b.remaining(), 1);
    }

    #[test]
    fn praos_leader_frequency_and_verification() {
        let prf = Prf::new(11);
        let nonce = Digest::tagged(b"n", b"1");
        assert!((1..1000).all(|s| praos_leader_check(&prf, PartyId(0), s, &nonce, 0.0, 0.05).is_none()));
        let wins: Vec<LotteryProof> = (1..=10_000).filter_map(|s| praos_leader_check(&prf, PartyId(0), s, &nonce, 1.0, 0.05)).collect();
        let freq = wins.len() as f64 / 10_000.0;
        assert!((freq - 0.05).abs() < 0.005, "freq {freq}");
        let p = wins[0];
        assert!(verify_praos(&prf, &p, &nonce, 1.0, 0.05));
        let mut moved = p;
        moved.slot += 1;
        assert!(!verify_praos(&prf, &moved, &nonce, 1.0, 0.05));
    }

    #[test]
    fn classic_leader_frequencies() {
        let prf = Prf::new(3);
        let nonce = Digest::tagged(b"n", b"2");
        let single = StakeDistribution::from_iter([(PartyId(4), BigRational::from_integer(5.into()))]);
        assert!((1..100).all(|s| classic_leader(&prf, s, &nonce, &single).unwrap() == PartyId(4)));
        let lopsided = StakeDistribution::from_iter([(PartyId(1), BigRational::from_integer(1.into())), (PartyId(2), BigRational::from_integer(0.into()))]);
        assert!((1..100).all(|s| classic_leader(&prf, s, &nonce, &lopsided).unwrap() == PartyId(1)));
        let split = StakeDistribution::from_iter([(PartyId(1), BigRational::from_integer(70.into())), (PartyId(2), BigRational::from_integer(30.into()))]);
        let ones = (1..=10_000).filter(|&s| classic_leader(&prf, s, &nonce, &split).unwrap() == PartyId(1)).count();
        assert!((ones as f64 / 10_000.0 - 0.7).abs() < 0.01);
        assert_eq!(classic_leader(&prf, 1, &nonce, &StakeDistribution::default()), Err(LotteryError::EmptyDistribution));
    }

    #[test]
    fn epoch_nonce_depends_on_window_prefix_only() {
        use crate::ledger::{Chain, PosBlock};
        use std::sync::Arc;
        let r = 30;
        let build = |flip: Option<Slot>, tail: u8| {
            let g = Arc::new(PosBlock::genesis(Digest::tagged(b"g", b"")));
            let mut blocks = vec![g];
            for s in 1..=60u64 {
                let mut c = Digest::tagged(b"c", &s.to_le_bytes());
                if Some(s) == flip {
                    c.0[0] ^= 1;
                }
                if s > 50 {
                    c = Digest::tagged(b"tail", &[tail]);
                }
                let p = blocks.last().unwrap().id;
                blocks.push(Arc::new(PosBlock::new(s, p, PartyId(0), LotteryProof::genesis(), c, vec![])));
            }
            Chain::from_blocks(blocks).unwrap()
        };
        let a = build(None, 1);
        let b = build(None, 2);
        let e1 = genesis_nonce(&a);
        assert_eq!(e1.value, a.genesis().nonce_contribution);
        let na = derive_epoch_nonce(&a, 3, r, &e1, 60).unwrap();
        assert_eq!(na, derive_epoch_nonce(&b, 3, r, &e1, 60).unwrap());
        // the epoch-3 window is slots 31..=50
        let flipped = build(Some(40), 1);
        assert_ne!(na, derive_epoch_nonce(&flipped, 3, r, &e1, 60).unwrap());
        let outside = build(Some(20), 1);
        assert_eq!(na, derive_epoch_nonce(&outside, 3, r, &e1, 60).unwrap());
        assert!(matches!(derive_epoch_nonce(&a, 3, r, &e1, 49), Err(LotteryError::ChainTooShort { .. })));
    }
}
