use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ledger::Slot;
use crate::node::Message;

/// Per-message delay chooser; delays are drawn from `0..=Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayPolicy {
    Fixed(u64),
    Max,
    Uniform,
}

/// Adjacency with per-edge extra latency in slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub neighbors: Vec<Vec<(usize, u64)>>,
}

impl Topology {
    pub fn full_mesh(n: usize) -> Topology {
        Topology { neighbors: (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| (j, 0)).collect()).collect() }
    }

    pub fn line(n: usize, extra: u64) -> Topology {
        let neighbors = (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push((i - 1, extra));
                }
                if i + 1 < n {
                    v.push((i + 1, extra));
                }
                v
            })
            .collect();
        Topology { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Delivery order inside a slot; adversarial releases use `Early`/`Late`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Priority {
    Early = 0,
    Honest = 1,
    Late = 2,
}

#[derive(Clone, Debug)]
pub struct Envelope {
    pub to: usize,
    pub msg: Message,
    /// Bitmask of nodes that already hold the message.
    pub served: u64,
}

#[derive(Debug)]
struct Event {
    key: (Slot, Priority, u64),
    env: Envelope,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Δ-synchronous delivery queue ordered by (due slot, priority, send order).
#[derive(Debug)]
pub struct Network {
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    pub delta: u64,
    pub policy: DelayPolicy,
    pub topology: Topology,
    rng: ChaCha8Rng,
}

impl Network {
    pub fn new(topology: Topology, delta: u64, policy: DelayPolicy, seed: u64) -> Network {
        assert!(topology.len() <= 64, "served masks hold at most 64 nodes");
        Network { queue: BinaryHeap::new(), seq: 0, delta, policy, topology, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_7473_696d) }
    }

    pub fn set_delay_policy(&mut self, policy: DelayPolicy) {
        self.policy = policy;
    }

    fn delay(&mut self) -> u64 {
        match self.policy {
            DelayPolicy::Fixed(d) => d.min(self.delta),
            DelayPolicy::Max => self.delta,
            DelayPolicy::Uniform => self.rng.gen_range(0..=self.delta),
        }
    }

    pub fn push(&mut self, due: Slot, priority: Priority, env: Envelope) {
        self.seq += 1;
        self.queue.push(Reverse(Event { key: (due, priority, self.seq), env }));
    }

    /// Sends `msg` from `from` to every neighbor not yet served.
    pub fn broadcast(&mut self, from: usize, msg: &Message, now: Slot, served: u64) {
        let mut mask = served | (1 << from);
        let targets: Vec<(usize, u64)> = self.topology.neighbors[from].iter().copied().filter(|(j, _)| mask & (1 << j) == 0).collect();
        for (j, _) in &targets {
            mask |= 1 << j;
        }
        for (j, extra) in targets {
            let due = now + self.delay() + extra;
            self.push(due, Priority::Honest, Envelope { to: j, msg: msg.clone(), served: mask });
        }
    }

    /// Pops the next message due at or before `now`.
    pub fn next_due(&mut self, now: Slot) -> Option<Envelope> {
        if self.queue.peek().is_some_and(|Reverse(e)| e.key.0 <= now) {
            self.queue.pop().map(|Reverse(e)| e.env)
        } else {
            None
        }
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
