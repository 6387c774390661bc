use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use super::block::{Block, PosBlock, PowBlock, Slot};
use super::chain::Chain;
use super::digest::Digest;

/// Dense index of a PoS block inside one store.
pub type PosIdx = u32;

pub const GENESIS_IDX: PosIdx = 0;

#[derive(Clone, Debug)]
struct PosEntry {
    block: Arc<PosBlock>,
    height: u32,
    /// `jumps[i]` is the ancestor `2^i` levels up.
    jumps: Vec<PosIdx>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertStatus {
    Inserted,
    Buffered,
    Duplicate,
    InvalidStructure,
    /// Structurally sound but refused by the validator (or depends on a refused block).
    Rejected,
}

#[derive(Debug)]
pub struct InsertOutcome {
    pub status: InsertStatus,
    /// Blocks attached by this call, the argument first when it attached,
    /// followed by transitively flushed descendants in attachment order.
    pub inserted: Vec<Block>,
    pub rejected: Vec<(Digest, String)>,
}

/// Content-addressed DAG of PoS and PoW blocks rooted at a genesis block.
#[derive(Clone, Debug)]
pub struct BlockStore {
    pos: Vec<PosEntry>,
    pos_index: HashMap<Digest, PosIdx>,
    pow: HashMap<Digest, Arc<PowBlock>>,
    referencers: HashMap<Digest, Vec<PosIdx>>,
    children: Vec<Vec<PosIdx>>,
    pending: HashMap<Digest, Block>,
    waiting: HashMap<Digest, Vec<Digest>>,
    rejected: HashSet<Digest>,
}

impl BlockStore {
    pub fn new(genesis: PosBlock) -> Self {
        let id = genesis.id;
        BlockStore {
            pos: vec![PosEntry { block: Arc::new(genesis), height: 0, jumps: Vec::new() }],
            pos_index: HashMap::from([(id, GENESIS_IDX)]),
            pow: HashMap::new(),
            referencers: HashMap::new(),
            children: vec![Vec::new()],
            pending: HashMap::new(),
            waiting: HashMap::new(),
            rejected: HashSet::new(),
        }
    }

    pub fn genesis(&self) -> &Arc<PosBlock> {
        &self.pos[0].block
    }

    pub fn contains(&self, id: &Digest) -> bool {
        self.pos_index.contains_key(id) || self.pow.contains_key(id)
    }

    pub fn is_pending(&self, id: &Digest) -> bool {
        self.pending.contains_key(id)
    }

    pub fn is_rejected(&self, id: &Digest) -> bool {
        self.rejected.contains(id)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn pos_len(&self) -> usize {
        self.pos.len()
    }

    pub fn pow_len(&self) -> usize {
        self.pow.len()
    }

    pub fn pos_idx(&self, id: &Digest) -> Option<PosIdx> {
        self.pos_index.get(id).copied()
    }

    pub fn pos(&self, idx: PosIdx) -> &Arc<PosBlock> {
        &self.pos[idx as usize].block
    }

    pub fn pos_by_id(&self, id: &Digest) -> Option<&Arc<PosBlock>> {
        self.pos_idx(id).map(|i| self.pos(i))
    }

    pub fn pow(&self, id: &Digest) -> Option<&Arc<PowBlock>> {
        self.pow.get(id)
    }

    pub fn pow_blocks(&self) -> impl Iterator<Item = &Arc<PowBlock>> {
        self.pow.values()
    }

    pub fn height(&self, idx: PosIdx) -> u32 {
        self.pos[idx as usize].height
    }

    pub fn slot(&self, idx: PosIdx) -> Slot {
        self.pos[idx as usize].block.slot
    }

    pub fn parent(&self, idx: PosIdx) -> Option<PosIdx> {
        self.pos[idx as usize].jumps.first().copied()
    }

    pub fn children(&self, idx: PosIdx) -> &[PosIdx] {
        &self.children[idx as usize]
    }

    /// PoS blocks (anywhere in the DAG) that reference the given PoW block.
    pub fn referencers(&self, pow_id: &Digest) -> &[PosIdx] {
        self.referencers.get(pow_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Digests of every attached block, for order-independence comparisons.
    pub fn contents(&self) -> BTreeSet<Digest> {
        self.pos_index.keys().chain(self.pow.keys()).copied().collect()
    }

    pub fn ancestor_at_height(&self, mut idx: PosIdx, height: u32) -> PosIdx {
        debug_assert!(height <= self.height(idx));
        let mut up = self.height(idx) - height;
        let mut level = 0;
        while up > 0 {
            if up & 1 == 1 {
                idx = self.pos[idx as usize].jumps[level];
            }
            up >>= 1;
            level += 1;
        }
        idx
    }

    /// Whether `anc` is `idx` or one of its ancestors.
    pub fn is_ancestor(&self, anc: PosIdx, idx: PosIdx) -> bool {
        let h = self.height(anc);
        h <= self.height(idx) && self.ancestor_at_height(idx, h) == anc
    }

    pub fn lca(&self, a: PosIdx, b: PosIdx) -> PosIdx {
        let h = self.height(a).min(self.height(b));
        let (mut a, mut b) = (self.ancestor_at_height(a, h), self.ancestor_at_height(b, h));
        if a == b {
            return a;
        }
        for level in (0..self.pos[a as usize].jumps.len()).rev() {
            let (ja, jb) = (self.pos[a as usize].jumps.get(level), self.pos[b as usize].jumps.get(level));
            if let (Some(&ja), Some(&jb)) = (ja, jb) {
                if ja != jb {
                    a = ja;
                    b = jb;
                }
            }
        }
        self.parent(a).expect("distinct blocks share genesis")
    }

    /// Last block on the chain ending at `idx` whose slot is at most `slot`.
    pub fn ancestor_at_slot(&self, mut idx: PosIdx, slot: Slot) -> PosIdx {
        if self.slot(idx) <= slot {
            return idx;
        }
        for level in (0..self.pos[idx as usize].jumps.len()).rev() {
            if let Some(&j) = self.pos[idx as usize].jumps.get(level) {
                if self.slot(j) > slot {
                    idx = j;
                }
            }
        }
        self.parent(idx).unwrap_or(GENESIS_IDX)
    }

    /// Number of chain blocks with slot in `[lo, hi]` on the chain ending at `tip`.
    pub fn count_in_slots(&self, tip: PosIdx, lo: Slot, hi: Slot) -> u32 {
        if lo > hi {
            return 0;
        }
        let upper = self.height(self.ancestor_at_slot(tip, hi));
        let lower = if lo == 0 { 0 } else { self.height(self.ancestor_at_slot(tip, lo - 1)) };
        let genesis_in = u32::from(lo == 0);
        upper - lower + genesis_in
    }

    /// Iterates `idx` and its ancestors down to genesis.
    pub fn ancestors(&self, idx: PosIdx) -> impl Iterator<Item = PosIdx> + '_ {
        std::iter::successors(Some(idx), move |&i| self.parent(i))
    }

    /// Whether the chain ending at `tip` references `pow_id`.
    pub fn chain_references(&self, tip: PosIdx, pow_id: &Digest) -> bool {
        self.referencers(pow_id).iter().any(|&r| self.is_ancestor(r, tip))
    }

    pub fn chain(&self, tip: PosIdx) -> Chain {
        let mut blocks: Vec<Arc<PosBlock>> = self.ancestors(tip).map(|i| self.pos(i).clone()).collect();
        blocks.reverse();
        Chain::from_trusted(blocks)
    }

    /// Inserts with only structural checks.
    pub fn insert_block(&mut self, block: Block) -> InsertOutcome {
        self.insert_with(block, |_, _| Ok(()))
    }

    /// Inserts `block`, buffering it until every dependency is present, then
    /// flushing buffered descendants transitively. `validate` runs once per block
    /// when all of its dependencies are attached.
    pub fn insert_with<F>(&mut self, block: Block, mut validate: F) -> InsertOutcome
    where
        F: FnMut(&BlockStore, &Block) -> Result<(), String>,
    {
        let mut out = InsertOutcome { status: InsertStatus::Inserted, inserted: Vec::new(), rejected: Vec::new() };
        let id = block.id();
        if block.recompute_id() != id {
            out.status = InsertStatus::InvalidStructure;
            return out;
        }
        if self.contains(&id) || self.pending.contains_key(&id) || self.rejected.contains(&id) {
            out.status = InsertStatus::Duplicate;
            return out;
        }
        let mut work = vec![block];
        let mut first = true;
        while let Some(b) = work.pop() {
            let status = self.try_attach(b, &mut validate, &mut out, &mut work);
            if first {
                out.status = status;
                first = false;
            }
        }
        out
    }

    fn try_attach<F>(&mut self, block: Block, validate: &mut F, out: &mut InsertOutcome, work: &mut Vec<Block>) -> InsertStatus
    where
        F: FnMut(&BlockStore, &Block) -> Result<(), String>,
    {
        let id = block.id();
        let deps = block.dependencies();
        if let Some(bad) = deps.iter().find(|d| self.rejected.contains(*d)) {
            let reason = format!("depends on rejected block {bad:?}");
            return self.reject(id, reason, out, work);
        }
        if let Some(missing) = deps.iter().find(|d| !self.contains(d)) {
            self.waiting.entry(*missing).or_default().push(id);
            self.pending.insert(id, block);
            return InsertStatus::Buffered;
        }
        if let Err(reason) = self.structural_check(&block) {
            return self.reject(id, reason, out, work);
        }
        if let Err(reason) = validate(self, &block) {
            return self.reject(id, reason, out, work);
        }
        self.attach(&block);
        out.inserted.push(block);
        self.wake(&id, work);
        InsertStatus::Inserted
    }

    fn reject(&mut self, id: Digest, reason: String, out: &mut InsertOutcome, work: &mut Vec<Block>) -> InsertStatus {
        self.rejected.insert(id);
        out.rejected.push((id, reason));
        self.wake(&id, work);
        InsertStatus::Rejected
    }

    fn wake(&mut self, id: &Digest, work: &mut Vec<Block>) {
        if let Some(waiters) = self.waiting.remove(id) {
            // Reverse so the stack pops them in arrival order.
            for w in waiters.into_iter().rev() {
                if let Some(b) = self.pending.remove(&w) {
                    work.push(b);
                }
            }
        }
    }

    fn structural_check(&self, block: &Block) -> Result<(), String> {
        match block {
            Block::Pos(b) => {
                let parent = self.pos_idx(&b.parent).ok_or("parent is not a PoS block")?;
                if b.slot <= self.slot(parent) {
                    return Err(format!("slot {} does not exceed parent slot {}", b.slot, self.slot(parent)));
                }
                if let Some(r) = b.pow_refs.iter().find(|r| !self.pow.contains_key(*r)) {
                    return Err(format!("reference {r:?} is not a PoW block"));
                }
                Ok(())
            }
            Block::Pow(b) => {
                if self.pos_idx(&b.anchor).is_none() {
                    return Err("anchor is not a PoS block".into());
                }
                Ok(())
            }
        }
    }

    fn attach(&mut self, block: &Block) {
        match block {
            Block::Pow(b) => {
                self.pow.insert(b.id, b.clone());
            }
            Block::Pos(b) => {
                let parent = self.pos_index[&b.parent];
                let idx = self.pos.len() as PosIdx;
                let mut jumps = vec![parent];
                let mut level = 0;
                while let Some(&next) = self.pos[jumps[level] as usize].jumps.get(level) {
                    jumps.push(next);
                    level += 1;
                }
                self.pos.push(PosEntry { block: b.clone(), height: self.height(parent) + 1, jumps });
                self.children.push(Vec::new());
                self.children[parent as usize].push(idx);
                self.pos_index.insert(b.id, idx);
                for r in &b.pow_refs {
                    self.referencers.entry(*r).or_default().push(idx);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::block::{PartyId, Target};
    use crate::lottery::LotteryProof;

    fn genesis() -> PosBlock {
        PosBlock::genesis(Digest::tagged(b"test", b"genesis"))
    }

    fn child(parent: &PosBlock, slot: Slot, refs: Vec<Digest>) -> PosBlock {
        PosBlock::new(slot, parent.id, PartyId(1), LotteryProof::genesis(), Digest::ZERO, refs)
    }

    fn linear(n: usize) -> (PosBlock, Vec<PosBlock>) {
        let g = genesis();
        let mut out: Vec<PosBlock> = Vec::new();
        for i in 0..n {
            let p = out.last().unwrap_or(&g).clone();
            out.push(child(&p, (i as Slot + 1) * 2, vec![]));
        }
        (g, out)
    }

    #[test]
    fn buffered_child_flushes_when_parent_arrives() {
        let (g, blocks) = linear(2);
        let mut s = BlockStore::new(g);
        let r = s.insert_block(blocks[1].clone().into());
        assert_eq!(r.status, InsertStatus::Buffered);
        let r = s.insert_block(blocks[0].clone().into());
        assert_eq!(r.status, InsertStatus::Inserted);
        assert_eq!(r.inserted.len(), 2);
        assert_eq!(s.pending_len(), 0);
        assert_eq!(s.insert_block(blocks[0].clone().into()).status, InsertStatus::Duplicate);
    }

    #[test]
    fn reverse_order_matches_forward_order() {
        let (g, blocks) = linear(5);
        let mut fwd = BlockStore::new(g.clone());
        let mut rev = BlockStore::new(g);
        for b in &blocks {
            fwd.insert_block(b.clone().into());
        }
        for b in blocks.iter().rev() {
            rev.insert_block(b.clone().into());
        }
        assert_eq!(fwd.contents(), rev.contents());
        assert_eq!(rev.pending_len(), 0);
    }

    #[test]
    fn tampered_digest_is_invalid_structure() {
        let (g, blocks) = linear(1);
        let mut s = BlockStore::new(g);
        let mut b = blocks[0].clone();
        b.slot += 1;
        assert_eq!(s.insert_block(b.into()).status, InsertStatus::InvalidStructure);
    }

    #[test]
    fn pow_waits_for_anchor_and_pos_waits_for_refs() {
        let (g, blocks) = linear(1);
        let mut s = BlockStore::new(g);
        let w = PowBlock::new(PartyId(2), 3, blocks[0].id, vec![], 0, Target::MAX);
        let b2 = child(&blocks[0], 5, vec![w.id]);
        assert_eq!(s.insert_block(b2.clone().into()).status, InsertStatus::Buffered);
        assert_eq!(s.insert_block(w.clone().into()).status, InsertStatus::Buffered);
        let r = s.insert_block(blocks[0].clone().into());
        assert_eq!(r.inserted.len(), 3);
        let tip = s.pos_idx(&b2.id).unwrap();
        assert!(s.chain_references(tip, &w.id));
        assert!(!s.chain_references(s.pos_idx(&blocks[0].id).unwrap(), &w.id));
    }

    #[test]
    fn rejection_propagates_to_descendants() {
        let (g, blocks) = linear(3);
        let mut s = BlockStore::new(g);
        s.insert_block(blocks[2].clone().into());
        s.insert_block(blocks[1].clone().into());
        let bad = blocks[0].id;
        let r = s.insert_with(blocks[0].clone().into(), |_, b| if b.id() == bad { Err("no".into()) } else { Ok(()) });
        assert_eq!(r.status, InsertStatus::Rejected);
        assert_eq!(r.rejected.len(), 3);
        assert_eq!(s.pos_len(), 1);
    }

    #[test]
    fn ancestry_queries() {
        let (g, blocks) = linear(20);
        let mut s = BlockStore::new(g);
        for b in &blocks {
            s.insert_block(b.clone().into());
        }
        let fork = child(&blocks[9], 21, vec![]);
        s.insert_block(fork.clone().into());
        let tip = s.pos_idx(&blocks[19].id).unwrap();
        let f = s.pos_idx(&fork.id).unwrap();
        assert_eq!(s.lca(tip, f), s.pos_idx(&blocks[9].id).unwrap());
        assert_eq!(s.height(tip), 20);
        assert_eq!(s.slot(s.ancestor_at_slot(tip, 15)), 14);
        assert_eq!(s.slot(s.ancestor_at_slot(tip, 1)), 0);
        assert_eq!(s.count_in_slots(tip, 1, 10), 5);
        assert!(s.is_ancestor(GENESIS_IDX, f));
        assert!(!s.is_ancestor(tip, f));
        assert_eq!(s.chain(tip).len(), 20);
    }
}
