use std::sync::Arc;

use thiserror::Error;

use super::block::{PosBlock, PowBlock, Slot};
use super::digest::Digest;
use super::store::BlockStore;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("chain is empty")]
    Empty,
    #[error("block at position {0} does not link to its predecessor")]
    BrokenLink(usize),
    #[error("slot does not increase at position {0}")]
    SlotRegression(usize),
    #[error("referenced PoW block {0:?} is missing from the store")]
    MissingReference(Digest),
}

/// Genesis-rooted sequence of PoS blocks. Length counts blocks after genesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    blocks: Vec<Arc<PosBlock>>,
}

impl Chain {
    pub fn from_blocks(blocks: Vec<Arc<PosBlock>>) -> Result<Chain, ChainError> {
        if blocks.is_empty() {
            return Err(ChainError::Empty);
        }
        for (i, w) in blocks.windows(2).enumerate() {
            if w[1].parent != w[0].id {
                return Err(ChainError::BrokenLink(i + 1));
            }
            if w[1].slot <= w[0].slot {
                return Err(ChainError::SlotRegression(i + 1));
            }
        }
        Ok(Chain { blocks })
    }

    pub(crate) fn from_trusted(blocks: Vec<Arc<PosBlock>>) -> Chain {
        debug_assert!(!blocks.is_empty());
        Chain { blocks }
    }

    pub fn genesis_only(genesis: Arc<PosBlock>) -> Chain {
        Chain { blocks: vec![genesis] }
    }

    pub fn len(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self) -> &Arc<PosBlock> {
        self.blocks.last().expect("chain holds genesis")
    }

    pub fn genesis(&self) -> &Arc<PosBlock> {
        &self.blocks[0]
    }

    pub fn blocks(&self) -> &[Arc<PosBlock>] {
        &self.blocks
    }

    pub fn ids(&self) -> impl Iterator<Item = Digest> + '_ {
        self.blocks.iter().map(|b| b.id)
    }

    pub fn contains(&self, id: &Digest) -> bool {
        self.blocks.iter().any(|b| b.id == *id)
    }

    /// `C^{⌈ell}`: the prefix whose blocks all have slot at most `now - ell`.
    pub fn prune(&self, now: Slot, ell: Slot) -> Chain {
        let Some(limit) = now.checked_sub(ell) else {
            return Chain::genesis_only(self.blocks[0].clone());
        };
        let keep = self.blocks.partition_point(|b| b.slot <= limit).max(1);
        Chain { blocks: self.blocks[..keep].to_vec() }
    }

    pub fn common_prefix(&self, other: &Chain) -> Chain {
        let n = self.blocks.iter().zip(&other.blocks).take_while(|(a, b)| a.id == b.id).count().max(1);
        Chain { blocks: self.blocks[..n].to_vec() }
    }

    pub fn is_prefix_of(&self, other: &Chain) -> bool {
        self.blocks.len() <= other.blocks.len() && self.head().id == other.blocks[self.blocks.len() - 1].id
    }

    /// Blocks with slot in `[lo, hi]`, in chain order.
    pub fn segment(&self, lo: Slot, hi: Slot) -> &[Arc<PosBlock>] {
        if lo > hi {
            return &[];
        }
        let start = self.blocks.partition_point(|b| b.slot < lo);
        let end = self.blocks.partition_point(|b| b.slot <= hi);
        &self.blocks[start..end.max(start)]
    }

    /// PoW blocks referenced by `segment(lo, hi)`, in chain then reference order.
    pub fn referenced_pow(&self, lo: Slot, hi: Slot, store: &BlockStore) -> Result<Vec<Arc<PowBlock>>, ChainError> {
        self.segment(lo, hi).iter().flat_map(|b| b.pow_refs.iter()).map(|r| store.pow(r).cloned().ok_or(ChainError::MissingReference(*r))).collect()
    }

    /// Block with the greatest slot not exceeding `slot`.
    pub fn at_slot(&self, slot: Slot) -> &Arc<PosBlock> {
        let i = self.blocks.partition_point(|b| b.slot <= slot);
        &self.blocks[i.saturating_sub(1)]
    }
}
