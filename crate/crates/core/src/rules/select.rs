use serde::{Deserialize, Serialize};

use crate::ledger::{BlockStore, Chain, PosIdx, Slot};

/// Number of blocks of `current` that adopting `candidate` would discard.
fn fork_depth(current: &Chain, candidate: &Chain) -> usize {
    current.len() - current.common_prefix(candidate).len()
}

/// Blocks of `chain` with slots in `(after, after + s]`.
fn density(chain: &Chain, after: Slot, s: u64) -> usize {
    chain.segment(after + 1, after + s).len()
}

/// Longest candidate among those discarding at most `k` blocks of `current`.
/// Ties keep the held chain, then the earliest candidate.
pub fn maxvalid_mc(current: &Chain, candidates: &[Chain], k: usize) -> Chain {
    let mut best = current;
    for c in candidates {
        if fork_depth(current, c) <= k && c.len() > best.len() {
            best = c;
        }
    }
    best.clone()
}

/// `maxvalid_mc` for shallow forks; a candidate forking deeper than `k` blocks
/// replaces the best chain so far only if it has strictly more blocks in the
/// `s` slots after their last common block.
pub fn maxvalid_bg(current: &Chain, candidates: &[Chain], k: usize, s: u64) -> Chain {
    let mut best = current;
    for c in candidates {
        if fork_depth(current, c) <= k {
            if c.len() > best.len() {
                best = c;
            }
        } else {
            let fork_slot = best.common_prefix(c).head().slot;
            if density(c, fork_slot, s) > density(best, fork_slot, s) {
                best = c;
            }
        }
    }
    best.clone()
}

/// Chain-selection rule applied by a node, evaluated on store indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    Mc {
        k: u32,
    },
    Bg {
        k: u32,
        s: u64,
    },
    /// Unbounded longest chain; used only by observers.
    Longest,
}

impl SelectionRule {
    /// Store-backed equivalent of [`maxvalid_mc`] / [`maxvalid_bg`] on tips.
    pub fn select(&self, store: &BlockStore, current: PosIdx, candidates: &[PosIdx]) -> PosIdx {
        let mut best = current;
        let depth = |c: PosIdx| store.height(current) - store.height(store.lca(current, c));
        for &c in candidates {
            match *self {
                SelectionRule::Longest => {
                    if store.height(c) > store.height(best) {
                        best = c;
                    }
                }
                SelectionRule::Mc { k } => {
                    if depth(c) <= k && store.height(c) > store.height(best) {
                        best = c;
                    }
                }
                SelectionRule::Bg { k, s } => {
                    if depth(c) <= k {
                        if store.height(c) > store.height(best) {
                            best = c;
                        }
                    } else {
                        let fork_slot = store.slot(store.lca(best, c));
                        let dense = |t: PosIdx| store.count_in_slots(t, fork_slot + 1, fork_slot + s);
                        if dense(c) > dense(best) {
                            best = c;
                        }
                    }
                }
            }
        }
        best
    }

    /// Blocks of `current` that switching to `candidate` discards.
    pub fn discarded(store: &BlockStore, current: PosIdx, candidate: PosIdx) -> u32 {
        store.height(current) - store.height(store.lca(current, candidate))
    }
}
