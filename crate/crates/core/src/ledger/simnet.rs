use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raft::{Message, NodeId};

/// Nodes in different groups cannot talk while the window is open.
/// Nodes listed in no group are isolated from everyone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionWindow {
    pub start_tick: u64,
    pub end_tick: u64,
    pub groups: Vec<Vec<NodeId>>,
}

impl PartitionWindow {
    pub fn active_at(&self, tick: u64) -> bool {
        tick >= self.start_tick && tick < self.end_tick
    }

    fn group_of(&self, node: NodeId) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&node))
    }

    pub fn separates(&self, a: NodeId, b: NodeId) -> bool {
        match (self.group_of(a), self.group_of(b)) {
            (Some(x), Some(y)) => x != y,
            _ => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct InFlight {
    deliver_at: u64,
    seq: u64,
    msg: Message,
}

impl Ord for InFlight {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_at, self.seq).cmp(&(other.deliver_at, other.seq))
    }
}

impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Why a message never reached its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Random,
    Partition,
}

/// Deterministic message scheduler with seeded latency, loss and
/// partitions.
#[derive(Debug)]
pub struct SimNet {
    rng: ChaCha8Rng,
    /// Inclusive range of delivery delays in ticks; the lower bound is at
    /// least 1 so nothing is delivered in the tick it was sent.
    latency_range: (u64, u64),
    drop_probability: f64,
    partitions: Vec<PartitionWindow>,
    queue: BinaryHeap<Reverse<InFlight>>,
    seq: u64,
}

impl SimNet {
    pub fn new(
        seed: u64,
        latency_range: (u64, u64),
        drop_probability: f64,
        partitions: Vec<PartitionWindow>,
    ) -> Self {
        let lo = latency_range.0.max(1);
        SimNet {
            rng: ChaCha8Rng::seed_from_u64(seed),
            latency_range: (lo, latency_range.1.max(lo)),
            drop_probability: drop_probability.clamp(0.0, 1.0),
            partitions,
            queue: BinaryHeap::new(),
            seq: 0,
        }
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn partitioned(&self, a: NodeId, b: NodeId, tick: u64) -> bool {
        self.partitions
            .iter()
            .any(|w| w.active_at(tick) && w.separates(a, b))
    }

    /// Queues `msg`, or reports a random drop.
    pub fn send(&mut self, msg: Message, now: u64) -> Option<DropReason> {
        if self.drop_probability > 0.0 && self.rng.gen_bool(self.drop_probability) {
            return Some(DropReason::Random);
        }
        let (lo, hi) = self.latency_range;
        let delay = self.rng.gen_range(lo..=hi);
        self.seq += 1;
        self.queue.push(Reverse(InFlight {
            deliver_at: now + delay,
            seq: self.seq,
            msg,
        }));
        None
    }

    /// Pops every message due at or before `now`. Partitions are judged at
    /// delivery time.
    pub fn deliver_due(&mut self, now: u64) -> Vec<Result<Message, (Message, DropReason)>> {
        let mut out = Vec::new();
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.deliver_at > now {
                break;
            }
            let Reverse(InFlight { msg, .. }) = self.queue.pop().expect("peeked");
            if self.partitioned(msg.from, msg.to, now) {
                out.push(Err((msg, DropReason::Partition)));
            } else {
                out.push(Ok(msg));
            }
        }
        out
    }
}
