use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::digest::{merkle_root, DecodeError, Decoder, Digest, Encoder};
use crate::lottery::LotteryProof;

pub type Slot = u64;
pub type EpochIndex = u64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct PartyId(pub u32);

impl PartyId {
    /// Leader id carried by the genesis block.
    pub const GENESIS: PartyId = PartyId(u32::MAX);
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub miner: bool,
    pub stakeholder: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub id: PartyId,
    pub roles: Roles,
}

/// Account-model transaction. Two transactions conflict when they share
/// `(sender, nonce)` but differ anywhere else.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: PartyId,
    pub nonce: u64,
    pub payload_tag: Vec<u8>,
}

impl Transaction {
    pub fn new(sender: PartyId, nonce: u64, payload_tag: impl Into<Vec<u8>>) -> Self {
        Transaction { sender, nonce, payload_tag: payload_tag.into() }
    }

    pub fn id(&self) -> Digest {
        let mut e = Encoder::new();
        self.encode_into(&mut e);
        Digest::tagged(b"TX", e.as_slice())
    }

    pub fn key(&self) -> (PartyId, u64) {
        (self.sender, self.nonce)
    }

    pub fn conflicts_with(&self, other: &Transaction) -> bool {
        self.key() == other.key() && self != other
    }

    fn encode_into(&self, e: &mut Encoder) {
        e.u32(self.sender.0).u64(self.nonce).bytes(&self.payload_tag);
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Transaction { sender: PartyId(d.u32()?), nonce: d.u64()?, payload_tag: d.bytes()? })
    }
}

/// Normalized PoW target: the per-query success probability. Difficulty is its
/// reciprocal.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Target(f64);

impl Target {
    pub const MAX: Target = Target(1.0);

    /// Clamps into `(0, 1]`; non-finite or non-positive inputs collapse to the
    /// smallest positive normal value.
    pub fn clamped(v: f64) -> Target {
        if v.is_nan() || v <= 0.0 || !v.is_finite() {
            if v == f64::INFINITY {
                return Target::MAX;
            }
            return Target(f64::MIN_POSITIVE);
        }
        Target(v.min(1.0))
    }

    pub fn new(v: f64) -> Option<Target> {
        (v > 0.0 && v <= 1.0).then_some(Target(v))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn difficulty(self) -> f64 {
        1.0 / self.0
    }

    /// `1/τ` as an exact rational (every finite `f64` is a dyadic rational).
    pub fn exact_difficulty(self) -> BigRational {
        exact_f64(self.0).recip()
    }
}

/// Exact rational value of a finite float; non-finite inputs map to zero.
pub fn exact_f64(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap_or_else(BigRational::zero)
}

/// Endorser block mined by a PoW miner and referenced by later main-chain blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowBlock {
    pub miner: PartyId,
    pub slot_claimed: Slot,
    pub anchor: Digest,
    pub payload: Vec<Transaction>,
    pub nonce: u64,
    pub target: Target,
    pub id: Digest,
}

impl PowBlock {
    pub fn new(miner: PartyId, slot_claimed: Slot, anchor: Digest, payload: Vec<Transaction>, nonce: u64, target: Target) -> Self {
        let merkle = payload_merkle(&payload);
        let id = pow_id(miner, slot_claimed, &anchor, &merkle, nonce);
        PowBlock { miner, slot_claimed, anchor, payload, nonce, target, id }
    }

    pub fn merkle(&self) -> Digest {
        payload_merkle(&self.payload)
    }

    pub fn recompute_id(&self) -> Digest {
        pow_id(self.miner, self.slot_claimed, &self.anchor, &self.merkle(), self.nonce)
    }

    pub fn difficulty(&self) -> f64 {
        self.target.difficulty()
    }
}

pub fn payload_merkle(payload: &[Transaction]) -> Digest {
    let ids: Vec<Digest> = payload.iter().map(Transaction::id).collect();
    merkle_root(&ids)
}

fn pow_id(miner: PartyId, slot: Slot, anchor: &Digest, merkle: &Digest, nonce: u64) -> Digest {
    let mut e = Encoder::new();
    e.u32(miner.0).u64(slot).digest(anchor).digest(merkle).u64(nonce);
    Digest::tagged(b"POW-BLOCK", e.as_slice())
}

/// Main-chain block proposed by a virtual-stake lottery winner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosBlock {
    pub slot: Slot,
    pub parent: Digest,
    pub leader: PartyId,
    pub leader_proof: LotteryProof,
    pub nonce_contribution: Digest,
    pub pow_refs: Vec<Digest>,
    pub id: Digest,
}

impl PosBlock {
    pub fn new(slot: Slot, parent: Digest, leader: PartyId, leader_proof: LotteryProof, nonce_contribution: Digest, pow_refs: Vec<Digest>) -> Self {
        let mut b = PosBlock { slot, parent, leader, leader_proof, nonce_contribution, pow_refs, id: Digest::ZERO };
        b.id = b.recompute_id();
        b
    }

    /// Slot-0 root. Its nonce contribution carries the epoch-1 nonce.
    pub fn genesis(genesis_nonce: Digest) -> Self {
        PosBlock::new(0, Digest::ZERO, PartyId::GENESIS, LotteryProof::genesis(), genesis_nonce, Vec::new())
    }

    pub fn is_genesis(&self) -> bool {
        self.slot == 0 && self.parent == Digest::ZERO
    }

    fn encode_body(&self, e: &mut Encoder) {
        e.u64(self.slot).digest(&self.parent).u32(self.leader.0);
        self.leader_proof.encode_into(e);
        e.digest(&self.nonce_contribution).u32(self.pow_refs.len() as u32);
        for r in &self.pow_refs {
            e.digest(r);
        }
    }

    pub fn recompute_id(&self) -> Digest {
        let mut e = Encoder::new();
        self.encode_body(&mut e);
        Digest::tagged(b"POS-BLOCK", e.as_slice())
    }
}

/// Either block kind, shared by reference across node stores.
#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Pos(Arc<PosBlock>),
    Pow(Arc<PowBlock>),
}

const TAG_POW: u8 = 0x01;
const TAG_POS: u8 = 0x02;

impl Block {
    pub fn id(&self) -> Digest {
        match self {
            Block::Pos(b) => b.id,
            Block::Pow(b) => b.id,
        }
    }

    pub fn recompute_id(&self) -> Digest {
        match self {
            Block::Pos(b) => b.recompute_id(),
            Block::Pow(b) => b.recompute_id(),
        }
    }

    /// Digests that must be present before this block can be inserted.
    pub fn dependencies(&self) -> Vec<Digest> {
        match self {
            Block::Pos(b) => std::iter::once(b.parent).chain(b.pow_refs.iter().copied()).collect(),
            Block::Pow(b) => vec![b.anchor],
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        match self {
            Block::Pow(b) => {
                e.u8(TAG_POW).u32(b.miner.0).u64(b.slot_claimed).digest(&b.anchor).u64(b.nonce).f64(b.target.value());
                e.u32(b.payload.len() as u32);
                for tx in &b.payload {
                    tx.encode_into(&mut e);
                }
                e.digest(&b.id);
            }
            Block::Pos(b) => {
                e.u8(TAG_POS);
                b.encode_body(&mut e);
                e.digest(&b.id);
            }
        }
        e.finish()
    }

    /// Parses the canonical layout and rejects records whose stored digest does
    /// not match the recomputed one.
    pub fn decode(bytes: &[u8]) -> Result<Block, DecodeError> {
        let mut d = Decoder::new(bytes);
        let block = match d.u8()? {
            TAG_POW => {
                let miner = PartyId(d.u32()?);
                let slot_claimed = d.u64()?;
                let anchor = d.digest()?;
                let nonce = d.u64()?;
                let target = Target(d.f64()?);
                let n = d.u32()? as usize;
                let mut payload = Vec::with_capacity(n);
                for _ in 0..n {
                    payload.push(Transaction::decode_from(&mut d)?);
                }
                let id = d.digest()?;
                Block::Pow(Arc::new(PowBlock { miner, slot_claimed, anchor, payload, nonce, target, id }))
            }
            TAG_POS => {
                let slot = d.u64()?;
                let parent = d.digest()?;
                let leader = PartyId(d.u32()?);
                let leader_proof = LotteryProof::decode_from(&mut d)?;
                let nonce_contribution = d.digest()?;
                let n = d.u32()? as usize;
                let mut pow_refs = Vec::with_capacity(n);
                for _ in 0..n {
                    pow_refs.push(d.digest()?);
                }
                let id = d.digest()?;
                Block::Pos(Arc::new(PosBlock { slot, parent, leader, leader_proof, nonce_contribution, pow_refs, id }))
            }
            t => return Err(DecodeError::UnknownTag(t)),
        };
        d.finish()?;
        let recomputed = block.recompute_id();
        if recomputed != block.id() {
            return Err(DecodeError::DigestMismatch { encoded: block.id(), recomputed });
        }
        Ok(block)
    }

    /// One-line JSON rendering for debug dumps.
    pub fn to_json_line(&self) -> String {
        let v = match self {
            Block::Pos(b) => serde_json::json!({ "kind": "pos", "block": b.as_ref() }),
            Block::Pow(b) => serde_json::json!({ "kind": "pow", "block": b.as_ref() }),
        };
        v.to_string()
    }
}

impl From<PosBlock> for Block {
    fn from(b: PosBlock) -> Self {
        Block::Pos(Arc::new(b))
    }
}

impl From<PowBlock> for Block {
    fn from(b: PowBlock) -> Self {
        Block::Pow(Arc::new(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_pow() -> PowBlock {
        PowBlock::new(PartyId(3), 17, Digest::tagged(b"a", b"x"), vec![Transaction::new(PartyId(1), 0, b"hi".to_vec())], 42, Target::new(0.25).unwrap())
    }

    #[test]
    fn conflict_rule() {
        let a = Transaction::new(PartyId(1), 5, b"a".to_vec());
        let b = Transaction::new(PartyId(1), 5, b"b".to_vec());
        let c = Transaction::new(PartyId(1), 6, b"a".to_vec());
        assert!(a.conflicts_with(&b));
        assert!(!a.conflicts_with(&a.clone()));
        assert!(!a.conflicts_with(&c));
    }

    #[test]
    fn pow_id_covers_header_fields() {
        let b = sample_pow();
        let mut other = b.clone();
        other.nonce += 1;
        assert_ne!(other.recompute_id(), b.id);
        assert_eq!(b.recompute_id(), b.id);
    }

    #[test]
    fn encode_decode_and_tamper_detection() {
        let block: Block = sample_pow().into();
        let bytes = block.encode();
        assert_eq!(Block::decode(&bytes).unwrap(), block);

        let mut bad = bytes.clone();
        bad[5] ^= 1; // inside slot_claimed
        assert!(matches!(Block::decode(&bad), Err(DecodeError::DigestMismatch { .. })));

        let g: Block = PosBlock::genesis(Digest::tagged(b"n", b"0")).into();
        assert_eq!(Block::decode(&g.encode()).unwrap(), g);
    }

    #[test]
    fn exact_difficulty_matches_float() {
        let t = Target::new(0.1).unwrap();
        let d = t.exact_difficulty();
        let approx = num_traits::ToPrimitive::to_f64(&d).unwrap();
        assert!((approx - 10.0).abs() < 1e-12);
        assert_eq!(exact_f64(0.5), BigRational::new(1.into(), 2.into()));
        assert_eq!(exact_f64(-3.0), BigRational::from_integer((-3).into()));
    }

    #[test]
    fn json_dump_is_single_line() {
        let line = Block::from(sample_pow()).to_json_line();
        assert!(!line.contains('\n'));
        assert!(line.contains("\"kind\":\"pow\""));
    }
}
