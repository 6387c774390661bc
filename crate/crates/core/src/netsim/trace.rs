use std::collections::BTreeSet;
use std::fmt::Write;

use serde::Serialize;

use crate::epoch::SlotMining;
use crate::ledger::{Block, BlockStore, Digest, PartyId, PosIdx, Slot};
use crate::rules::MonitorLog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Pos,
    Pow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinedRecord {
    pub slot: Slot,
    pub id: Digest,
    pub party: PartyId,
    pub honest: bool,
    pub kind: BlockKind,
    pub difficulty: f64,
}

impl MinedRecord {
    pub fn new(slot: Slot, block: &Block, honest: bool) -> MinedRecord {
        match block {
            Block::Pos(b) => MinedRecord { slot, id: b.id, party: b.leader, honest, kind: BlockKind::Pos, difficulty: 0.0 },
            Block::Pow(w) => MinedRecord { slot, id: w.id, party: w.miner, honest, kind: BlockKind::Pow, difficulty: w.difficulty() },
        }
    }
}

/// Append-only record of one run.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub mined: Vec<MinedRecord>,
    pub mining: Vec<SlotMining>,
    /// Honest tips per slot, as indices into the omniscient store.
    pub log: MonitorLog,
    pub observer_tips: Vec<Vec<PosIdx>>,
    /// Transactions handed to every honest node, with the slot.
    pub delivered_txs: Vec<(Digest, Slot)>,
    pub honest: BTreeSet<PartyId>,
}

impl Trace {
    pub fn slots(&self) -> Slot {
        self.mining.len() as Slot
    }

    /// Honest PoW blocks with their mining slot.
    pub fn honest_pow(&self) -> Vec<(Digest, Slot)> {
        self.mined.iter().filter(|m| m.honest && m.kind == BlockKind::Pow).map(|m| (m.id, m.slot)).collect()
    }

    /// One row per slot: mining counters and every honest tip.
    pub fn to_csv(&self, global: &BlockStore) -> String {
        let nodes = self.log.tips.first().map_or(0, Vec::len);
        let mut out = String::from("slot,honest_queries,honest_difficulty,adversarial_difficulty");
        for i in 0..nodes {
            write!(out, ",tip_{i}").unwrap();
        }
        out.push('\n');
        for (r, (m, tips)) in self.mining.iter().zip(&self.log.tips).enumerate() {
            write!(out, "{},{},{},{}", r + 1, m.honest_queries, m.honest_difficulty, m.adversarial_difficulty).unwrap();
            for &t in tips {
                write!(out, ",{}", &global.pos(t).id.to_hex()[..16]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}
