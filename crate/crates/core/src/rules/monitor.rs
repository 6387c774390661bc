use serde::Serialize;

use crate::ledger::{BlockStore, Digest, PartyId, PosIdx, Slot, GENESIS_IDX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    CommonPrefix,
    ChainQuality,
    Freshness,
    Liveness,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub property: Property,
    pub slot: Slot,
    pub nodes: Vec<usize>,
    pub evidence: Vec<Digest>,
}

impl Violation {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("violation serializes")
    }
}

/// Per-slot tips of every honest node, as indices into an omniscient store.
/// Row `r - 1` holds the tips at the end of slot `r`.
#[derive(Clone, Debug, Default)]
pub struct MonitorLog {
    pub tips: Vec<Vec<PosIdx>>,
    pub violations: Vec<Violation>,
}

impl MonitorLog {
    pub fn record(&mut self, tips: Vec<PosIdx>) {
        self.tips.push(tips);
    }

    pub fn tips_at(&self, slot: Slot) -> Option<&[PosIdx]> {
        slot.checked_sub(1).and_then(|i| self.tips.get(i as usize)).map(Vec::as_slice)
    }

    pub fn slots(&self) -> Slot {
        self.tips.len() as Slot
    }
}

/// Tip of `prune(chain(tip), ell)` at slot `now`.
pub fn pruned_tip(store: &BlockStore, tip: PosIdx, now: Slot, ell: u64) -> PosIdx {
    match now.checked_sub(ell) {
        Some(limit) => store.ancestor_at_slot(tip, limit),
        None => GENESIS_IDX,
    }
}

/// For every node `i` and slot `r₁`, the `ell_cp`-pruned chain of `i` at `r₁`
/// must be a prefix of every honest chain held at any `r₂ ≥ r₁`.
pub fn monitor_cp(store: &BlockStore, log: &MonitorLog, ell_cp: u64) -> Vec<Violation> {
    let n = log.tips.len();
    let mut suffix = vec![GENESIS_IDX; n];
    let mut acc: Option<PosIdx> = None;
    for r in (0..n).rev() {
        for &t in &log.tips[r] {
            acc = Some(acc.map_or(t, |a| store.lca(a, t)));
        }
        suffix[r] = acc.unwrap_or(GENESIS_IDX);
    }
    let mut out = Vec::new();
    for (r, tips) in log.tips.iter().enumerate() {
        let slot = r as Slot + 1;
        for (i, &t) in tips.iter().enumerate() {
            let pruned = pruned_tip(store, t, slot, ell_cp);
            if !store.is_ancestor(pruned, suffix[r]) {
                out.push(Violation { property: Property::CommonPrefix, slot, nodes: vec![i], evidence: vec![store.pos(pruned).id, store.pos(suffix[r]).id] });
            }
        }
    }
    out
}

/// Every `ell_cq` consecutive slots within `[1, head slot]` of the chain ending
/// at `tip` must contain a block led by an honest party.
pub fn monitor_ecq(store: &BlockStore, tip: PosIdx, ell_cq: u64, honest: impl Fn(PartyId) -> bool) -> Vec<Violation> {
    let end = store.slot(tip) + 1;
    let mut honest_slots: Vec<(Slot, Digest)> =
        store.ancestors(tip).filter(|&i| i != GENESIS_IDX && honest(store.pos(i).leader)).map(|i| (store.slot(i), store.pos(i).id)).collect();
    honest_slots.reverse();
    let mut out = Vec::new();
    let mut prev = (0, store.genesis().id);
    for next in honest_slots.into_iter().chain(std::iter::once((end, store.pos(tip).id))) {
        if next.0 - prev.0 > ell_cq {
            out.push(Violation { property: Property::ChainQuality, slot: prev.0 + 1, nodes: vec![], evidence: vec![prev.1, next.1] });
        }
        prev = next;
    }
    out
}

/// Every honest PoW block mined at slot `r` must be referenced in every honest
/// node's κ-pruned chain at slot `r + r_wait`.
pub fn monitor_freshness(store: &BlockStore, log: &MonitorLog, mined: &[(Digest, Slot)], kappa: u64, r_wait: u64) -> Vec<Violation> {
    let mut out = Vec::new();
    for &(id, r) in mined {
        let at = r + r_wait;
        let Some(tips) = log.tips_at(at) else { continue };
        let late: Vec<usize> =
            tips.iter().enumerate().filter(|(_, &t)| !store.chain_references(pruned_tip(store, t, at, kappa), &id)).map(|(i, _)| i).collect();
        if !late.is_empty() {
            out.push(Violation { property: Property::Freshness, slot: at, nodes: late, evidence: vec![id] });
        }
    }
    out
}

/// Each transaction delivered to all honest nodes at slot `d` with `d + u < end`
/// must, at slot `d + u + 1`, sit at the same position in every node's confirmed
/// ledger. `position(node, slot, tx)` reports that position.
pub fn monitor_liveness(
    delivered: &[(Digest, Slot)],
    u: u64,
    end: Slot,
    nodes: usize,
    mut position: impl FnMut(usize, Slot, &Digest) -> Option<usize>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for &(tx, d) in delivered {
        let at = d + u + 1;
        if at > end {
            continue;
        }
        let pos: Vec<Option<usize>> = (0..nodes).map(|n| position(n, at, &tx)).collect();
        let agreed = pos.first().copied().flatten().is_some() && pos.windows(2).all(|w| w[0] == w[1]);
        if !agreed {
            let bad = pos.iter().enumerate().filter(|(_, p)| p.is_none() || **p != pos[0]).map(|(i, _)| i).collect();
            out.push(Violation { property: Property::Liveness, slot: at, nodes: bad, evidence: vec![tx] });
        }
    }
    out
}
