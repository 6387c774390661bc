//! Stake distributions and the work-to-stake conversion.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ledger::block::exact_f64;
use crate::ledger::PartyId;

#[derive(Debug, Error, PartialEq)]
pub enum StakeError {
    #[error("no PoW difficulty referenced in the measurement window")]
    NoWorkReferenced,
    #[error("weights must be positive and sum to 1 (sum = {0})")]
    BadWeights(f64),
    #[error("{0} distributions but {1} weights")]
    LengthMismatch(usize, usize),
    #[error("negative stake for {0}")]
    Negative(PartyId),
}

/// Exact non-negative stake per party.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StakeDistribution {
    entries: BTreeMap<PartyId, BigRational>,
    total: BigRational,
}

impl Serialize for StakeDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let shares: BTreeMap<String, f64> = self.shares_f64().into_iter().map(|(p, v)| (p.to_string(), v)).collect();
        shares.serialize(s)
    }
}

impl FromIterator<(PartyId, BigRational)> for StakeDistribution {
    fn from_iter<I: IntoIterator<Item = (PartyId, BigRational)>>(iter: I) -> Self {
        let mut d = StakeDistribution::default();
        for (p, v) in iter {
            d.add(p, v);
        }
        d
    }
}

pub fn rational(v: f64) -> BigRational {
    exact_f64(v)
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl StakeDistribution {
    pub fn try_from_iter(iter: impl IntoIterator<Item = (PartyId, BigRational)>) -> Result<Self, StakeError> {
        let mut d = StakeDistribution::default();
        for (p, v) in iter {
            if v.is_negative() {
                return Err(StakeError::Negative(p));
            }
            d.add(p, v);
        }
        Ok(d)
    }

    pub fn from_f64(iter: impl IntoIterator<Item = (PartyId, f64)>) -> Result<Self, StakeError> {
        Self::try_from_iter(iter.into_iter().map(|(p, v)| (p, rational(v))))
    }

    pub fn add(&mut self, party: PartyId, amount: BigRational) {
        self.total += &amount;
        *self.entries.entry(party).or_insert_with(BigRational::zero) += amount;
    }

    pub fn get(&self, party: PartyId) -> BigRational {
        self.entries.get(&party).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn total(&self) -> &BigRational {
        &self.total
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parties(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PartyId, &BigRational)> {
        self.entries.iter().map(|(p, v)| (*p, v))
    }

    /// Exact relative share; zero when the total is zero.
    pub fn share(&self, party: PartyId) -> BigRational {
        if self.total.is_zero() {
            return BigRational::zero();
        }
        self.get(party) / &self.total
    }

    pub fn shares(&self) -> StakeDistribution {
        if self.total.is_zero() {
            return StakeDistribution::default();
        }
        self.entries.iter().map(|(p, v)| (*p, v / &self.total)).collect()
    }

    pub fn shares_f64(&self) -> Vec<(PartyId, f64)> {
        self.entries
            .iter()
            .map(|(p, v)| {
                let s = if self.total.is_zero() { 0.0 } else { (v / &self.total).to_f64().unwrap_or(0.0) };
                (*p, s)
            })
            .collect()
    }

    pub fn scaled(&self, factor: &BigRational) -> StakeDistribution {
        self.entries.iter().map(|(p, v)| (*p, v * factor)).collect()
    }
}

/// Work stake: each party's referenced-difficulty share of `ω/(1−ω)·actual_total`.
///
/// `difficulty` carries exact per-party referenced difficulty. `omega` must be
/// below 1; the share formulation in [`virtual_shares`] covers `ω = 1`.
pub fn work_stake(difficulty: &StakeDistribution, omega: &BigRational, actual_total: &BigRational) -> Result<StakeDistribution, StakeError> {
    if difficulty.total().is_zero() {
        return Err(StakeError::NoWorkReferenced);
    }
    let work_total = omega / (BigRational::one() - omega) * actual_total;
    Ok(difficulty.shares().scaled(&work_total))
}

/// Pointwise sum of actual and work stake.
pub fn virtual_stake(actual: &StakeDistribution, work: &StakeDistribution) -> StakeDistribution {
    actual.iter().chain(work.iter()).map(|(p, v)| (p, v.clone())).collect()
}

/// Relative virtual shares `ω·work share + (1−ω)·actual share`, well defined at
/// `ω = 1`. An empty work distribution gives the actual shares.
pub fn virtual_shares(actual: &StakeDistribution, work_difficulty: &StakeDistribution, omega: &BigRational) -> StakeDistribution {
    if work_difficulty.total().is_zero() {
        return actual.shares();
    }
    let one_minus = BigRational::one() - omega;
    let mut out: StakeDistribution = actual.shares().scaled(&one_minus);
    for (p, v) in work_difficulty.shares().iter() {
        out.add(p, v * omega);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiResource {
    pub shares: StakeDistribution,
    /// Indices of resources whose distribution had zero total.
    pub degenerate: Vec<usize>,
}

/// Combines `M` resources: resource `i` is normalized and scaled to `ωᵢ`.
pub fn multi_resource_virtual_stake(distributions: &[StakeDistribution], weights: &[f64]) -> Result<MultiResource, StakeError> {
    if distributions.len() != weights.len() {
        return Err(StakeError::LengthMismatch(distributions.len(), weights.len()));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w.is_nan() || w <= 0.0) || (sum - 1.0).abs() > 1e-12 {
        return Err(StakeError::BadWeights(sum));
    }
    let mut shares = StakeDistribution::default();
    let mut degenerate = Vec::new();
    for (i, (d, &w)) in distributions.iter().zip(weights).enumerate() {
        if d.total().is_zero() {
            degenerate.push(i);
            continue;
        }
        let weight = rational(w);
        for (p, v) in d.shares().iter() {
            shares.add(p, v * &weight);
        }
    }
    Ok(MultiResource { shares, degenerate })
}
