use std::collections::HashSet;

use thiserror::Error;

use crate::epoch::{EpochContext, EpochEngine, LeaderMode};
use crate::ledger::{Block, BlockStore, Digest, PosBlock, PosIdx, PowBlock, Slot};
use crate::lottery::{classic_leader, classic_proof, nonce_contribution, verify_praos, PowOracle};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum Invalid {
    #[error("anchor at slot {anchor_slot} is older than {sl_re} slots at slot {at_slot}")]
    Stale { anchor_slot: Slot, at_slot: Slot, sl_re: u64 },
    #[error("target {got} is neither the epoch target {current} nor the previous one")]
    WrongTarget { got: f64, current: f64 },
    #[error("proof of work does not meet its target")]
    BadProof,
    #[error("anchor {0:?} is not on the including chain")]
    UnknownAnchor(Digest),
    #[error("leader proof does not verify")]
    BadLeaderProof,
    #[error("nonce contribution does not match the leader's evaluation")]
    BadNonceContribution,
    #[error("slot {slot} does not exceed parent slot {parent}")]
    SlotRegression { slot: Slot, parent: Slot },
    #[error("unknown parent {0:?}")]
    UnknownParent(Digest),
    #[error("PoW block {0:?} is already referenced")]
    DuplicateReference(Digest),
    #[error("reference {id:?}: {reason}")]
    InvalidPowRef { id: Digest, reason: Box<Invalid> },
}

/// Checks a PoW block for inclusion by a PoS block at `at_slot` whose parent is `parent`.
pub fn validate_pow_block(
    block: &PowBlock,
    ctx: &EpochContext,
    oracle: &PowOracle,
    store: &BlockStore,
    parent: PosIdx,
    at_slot: Slot,
    sl_re: u64,
) -> Result<(), Invalid> {
    if !oracle.verify(block) {
        return Err(Invalid::BadProof);
    }
    if !ctx.accepts_target(block.target) {
        return Err(Invalid::WrongTarget { got: block.target.value(), current: ctx.target.value() });
    }
    let anchor = store.pos_idx(&block.anchor).filter(|&a| store.is_ancestor(a, parent)).ok_or(Invalid::UnknownAnchor(block.anchor))?;
    let anchor_slot = store.slot(anchor);
    if anchor_slot + sl_re < at_slot {
        return Err(Invalid::Stale { anchor_slot, at_slot, sl_re });
    }
    Ok(())
}

/// Whether a PoW block could be referenced by a PoS block at `slot` on `parent`,
/// including the duplicate check against the chain.
pub fn referencable(
    block: &PowBlock,
    ctx: &EpochContext,
    oracle: &PowOracle,
    store: &BlockStore,
    parent: PosIdx,
    slot: Slot,
    sl_re: u64,
) -> Result<(), Invalid> {
    if store.chain_references(parent, &block.id) {
        return Err(Invalid::DuplicateReference(block.id));
    }
    validate_pow_block(block, ctx, oracle, store, parent, slot, sl_re)
}

/// Full validation of a PoS block whose parent and references are in `store`.
pub fn validate_pos_block(block: &PosBlock, engine: &mut EpochEngine, store: &BlockStore) -> Result<(), Invalid> {
    let parent = store.pos_idx(&block.parent).ok_or(Invalid::UnknownParent(block.parent))?;
    let parent_slot = store.slot(parent);
    if block.slot <= parent_slot {
        return Err(Invalid::SlotRegression { slot: block.slot, parent: parent_slot });
    }
    let setup = engine.setup().clone();
    let p = &setup.params;
    let ctx = engine.context(store, parent, p.epoch_of(block.slot));
    let nonce = &ctx.nonce.value;
    let proof = &block.leader_proof;
    let leader_ok = proof.party == block.leader
        && proof.slot == block.slot
        && match setup.leader_mode {
            LeaderMode::Praos => verify_praos(&setup.prf, proof, nonce, ctx.share(block.leader), p.f_s),
            LeaderMode::Classic => {
                classic_leader(&setup.prf, block.slot, nonce, &ctx.shares).ok() == Some(block.leader)
                    && *proof == classic_proof(&setup.prf, block.leader, block.slot, nonce)
            }
        };
    if !leader_ok {
        return Err(Invalid::BadLeaderProof);
    }
    if block.nonce_contribution != nonce_contribution(&setup.prf, block.leader, block.slot, nonce) {
        return Err(Invalid::BadNonceContribution);
    }
    let mut seen = HashSet::new();
    for r in &block.pow_refs {
        let w = store.pow(r).ok_or(Invalid::UnknownAnchor(*r))?;
        if !seen.insert(*r) {
            return Err(Invalid::DuplicateReference(*r));
        }
        referencable(w, &ctx, &setup.oracle, store, parent, block.slot, p.sl_re).map_err(|reason| match reason {
            Invalid::DuplicateReference(_) => reason,
            reason => Invalid::InvalidPowRef { id: *r, reason: Box::new(reason) },
        })?;
    }
    Ok(())
}

/// Store-insertion validator: PoW blocks need a valid proof; PoS blocks get full validation.
pub fn validate_for_store(block: &Block, engine: &mut EpochEngine, store: &BlockStore) -> Result<(), String> {
    match block {
        Block::Pow(w) => {
            if engine.setup().oracle.verify(w) {
                Ok(())
            } else {
                Err(Invalid::BadProof.to_string())
            }
        }
        Block::Pos(b) => validate_pos_block(b, engine, store).map_err(|e| e.to_string()),
    }
}
