use std::collections::HashSet;

use serde::Serialize;

use crate::ledger::{BlockStore, Chain, Digest, Slot, Transaction};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LedgerEntry {
    pub tx: Transaction,
    /// False when an earlier entry already used the transaction's `(sender, nonce)`.
    pub executed: bool,
}

/// Ordered transactions of a confirmed chain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Ledger {
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    /// Orders the transactions of `chain`: chain order, then reference order,
    /// then payload order.
    pub fn from_chain(chain: &Chain, store: &BlockStore) -> Ledger {
        let mut used = HashSet::new();
        let mut entries = Vec::new();
        for b in chain.blocks() {
            for r in &b.pow_refs {
                let Some(w) = store.pow(r) else { continue };
                for tx in &w.payload {
                    let executed = used.insert(tx.key());
                    entries.push(LedgerEntry { tx: tx.clone(), executed });
                }
            }
        }
        Ledger { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, tx: &Digest) -> Option<usize> {
        self.entries.iter().position(|e| e.tx.id() == *tx)
    }

    pub fn is_prefix_of(&self, other: &Ledger) -> bool {
        other.entries.starts_with(&self.entries)
    }
}

/// Ledger of `prune(chain, κ)` at slot `now`.
pub fn confirmed_ledger(chain: &Chain, store: &BlockStore, kappa: u64, now: Slot) -> Ledger {
    Ledger::from_chain(&chain.prune(now, kappa), store)
}

/// Fraction of ledger entries that failed to execute.
pub fn normalized_spam(ledger: &Ledger) -> f64 {
    if ledger.is_empty() {
        return 0.0;
    }
    let failed = ledger.entries.iter().filter(|e| !e.executed).count();
    failed as f64 / ledger.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Block, PartyId, PosBlock, PowBlock, Target};
    use crate::lottery::LotteryProof;
    use std::sync::Arc;

    #[test]
    fn conflict_and_prefix() {
        let g = PosBlock::genesis(Digest::ZERO);
        let mut store = BlockStore::new(g.clone());
        assert!(confirmed_ledger(&Chain::genesis_only(Arc::new(g.clone())), &store, 2, 10).is_empty());
        let a = Transaction::new(PartyId(1), 0, *b"a");
        let b = Transaction::new(PartyId(1), 0, *b"b");
        let c = Transaction::new(PartyId(2), 0, *b"c");
        let w1 = PowBlock::new(PartyId(0), 1, g.id, vec![a.clone(), c.clone()], 0, Target::MAX);
        let w2 = PowBlock::new(PartyId(0), 1, g.id, vec![b.clone()], 1, Target::MAX);
        store.insert_block(Block::from(w1.clone()));
        store.insert_block(Block::from(w2.clone()));
        let p1 = PosBlock::new(3, g.id, PartyId(0), LotteryProof::genesis(), Digest::ZERO, vec![w1.id]);
        let p2 = PosBlock::new(5, p1.id, PartyId(0), LotteryProof::genesis(), Digest::ZERO, vec![w2.id]);
        let chain = Chain::from_blocks(vec![Arc::new(g), Arc::new(p1), Arc::new(p2)]).unwrap();
        let full = confirmed_ledger(&chain, &store, 2, 7);
        assert_eq!(full.entries.iter().map(|e| e.executed).collect::<Vec<_>>(), vec![true, true, false]);
        assert_eq!(full.entries[2].tx, b);
        assert!((normalized_spam(&full) - 1.0 / 3.0).abs() < 1e-12);
        let early = confirmed_ledger(&chain, &store, 2, 6);
        assert_eq!(early.len(), 2);
        assert!(early.is_prefix_of(&full));
        assert_eq!(full.position(&c.id()), Some(1));
    }
}
