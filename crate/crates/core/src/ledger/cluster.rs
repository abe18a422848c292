use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::merkle::Digest;

use super::block::Block;
use super::raft::{Message, NodeId, ProposeOutcome, RaftConfig, RaftNode};
use super::safety::{SafetyMonitor, SafetyReport};
use super::simnet::{DropReason, PartitionWindow, SimNet};
use super::store::{BlockStore, QueryResult};
use super::LedgerError;

/// Node down for `[start_tick, end_tick)`; it restarts with its persistent
/// state at `end_tick`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashWindow {
    pub node: NodeId,
    pub start_tick: u64,
    pub end_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub node_count: u32,
    pub seed: u64,
    pub latency_range: (u64, u64),
    pub drop_probability: f64,
    pub partitions: Vec<PartitionWindow>,
    pub crashes: Vec<CrashWindow>,
    pub election_timeout: (u64, u64),
    pub heartbeat_interval: u64,
    pub uniform_first_timeout: bool,
    /// Ticks a proposal may wait for a leader and a commit.
    pub propose_timeout_ticks: u64,
    /// Where `node-{i}.jsonl` block files go; in memory when unset.
    pub store_dir: Option<PathBuf>,
    /// Run the safety checks after every tick.
    pub monitor: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let raft = RaftConfig::default();
        SimConfig {
            node_count: 3,
            seed: 0,
            latency_range: (1, 3),
            drop_probability: 0.0,
            partitions: Vec::new(),
            crashes: Vec::new(),
            election_timeout: raft.election_timeout,
            heartbeat_interval: raft.heartbeat_interval,
            uniform_first_timeout: false,
            propose_timeout_ticks: 500,
            store_dir: None,
            monitor: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.node_count == 0 || self.node_count.is_multiple_of(2) {
            return Err(LedgerError::InvalidConfig(format!(
                "node_count must be odd and at least 1, got {}",
                self.node_count
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(LedgerError::InvalidConfig(format!(
                "drop_probability {} outside [0, 1]",
                self.drop_probability
            )));
        }
        if self.latency_range.0 == 0 || self.latency_range.0 > self.latency_range.1 {
            return Err(LedgerError::InvalidConfig(format!(
                "latency_range {:?} must satisfy 1 <= lo <= hi",
                self.latency_range
            )));
        }
        let (lo, hi) = self.election_timeout;
        if lo == 0 || lo > hi || self.heartbeat_interval == 0 || self.heartbeat_interval >= lo {
            return Err(LedgerError::InvalidConfig(format!(
                "election timeout {:?} and heartbeat {} are inconsistent",
                self.election_timeout, self.heartbeat_interval
            )));
        }
        let ids = 0..self.node_count;
        for w in &self.partitions {
            if w.start_tick > w.end_tick || w.groups.iter().flatten().any(|n| !ids.contains(n)) {
                return Err(LedgerError::InvalidConfig(format!(
                    "bad partition window {w:?}"
                )));
            }
        }
        for c in &self.crashes {
            if c.start_tick > c.end_tick || !ids.contains(&c.node) {
                return Err(LedgerError::InvalidConfig(format!(
                    "bad crash window {c:?}"
                )));
            }
        }
        Ok(())
    }

    fn raft(&self) -> RaftConfig {
        RaftConfig {
            election_timeout: self.election_timeout,
            heartbeat_interval: self.heartbeat_interval,
            uniform_first_timeout: self.uniform_first_timeout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitResult {
    pub committed: bool,
    /// Block index the root occupies once applied (no-op entries excluded).
    pub index: u64,
    pub log_index: u64,
    pub term: u64,
    pub redirected_from: Option<NodeId>,
    /// Ticks between the call and the commit.
    pub ticks: u64,
}

/// What happened in one tick.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TickEvents {
    pub tick: u64,
    pub delivered: usize,
    pub dropped: usize,
    pub new_leaders: Vec<(NodeId, u64)>,
    pub applied: Vec<(NodeId, Block)>,
}

/// A Raft group on a simulated network, driven one logical tick at a time.
pub struct Cluster {
    config: SimConfig,
    nodes: Vec<RaftNode>,
    down: Vec<bool>,
    net: SimNet,
    now: u64,
    monitor: SafetyMonitor,
    trace: Sha256,
    trace_events: u64,
    messages_sent: u64,
    messages_dropped: u64,
}

impl Cluster {
    pub fn new(config: SimConfig) -> Result<Self, LedgerError> {
        config.validate()?;
        let ids: Vec<NodeId> = (0..config.node_count).collect();
        let mut nodes = Vec::with_capacity(ids.len());
        for &id in &ids {
            let store = match &config.store_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    BlockStore::create(dir.join(format!("node-{id}.jsonl")))?
                }
                None => BlockStore::in_memory(),
            };
            let peers = ids.iter().copied().filter(|&p| p != id).collect();
            nodes.push(RaftNode::new(id, peers, config.raft(), config.seed, store));
        }
        let net = SimNet::new(
            config.seed.wrapping_add(0x5eed),
            config.latency_range,
            config.drop_probability,
            config.partitions.clone(),
        );
        Ok(Cluster {
            down: vec![false; nodes.len()],
            nodes,
            net,
            now: 0,
            monitor: SafetyMonitor::new(),
            trace: Sha256::new(),
            trace_events: 0,
            messages_sent: 0,
            messages_dropped: 0,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn nodes(&self) -> &[RaftNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &RaftNode {
        &self.nodes[id as usize]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut RaftNode {
        &mut self.nodes[id as usize]
    }

    pub fn is_down(&self, id: NodeId) -> bool {
        self.down[id as usize]
    }

    pub fn messages_sent(&self) -> u64 {
        self.messages_sent
    }

    pub fn messages_dropped(&self) -> u64 {
        self.messages_dropped
    }

    /// The live leader with the highest term, if any.
    pub fn leader(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.is_leader() && !self.down[n.id() as usize])
            .max_by_key(|n| n.current_term())
            .map(|n| n.id())
    }

    fn record(&mut self, parts: &[&[u8]]) {
        for p in parts {
            self.trace.update(p);
        }
        self.trace_events += 1;
    }

    /// Digest over every scheduling event so far; equal digests mean
    /// identical runs.
    pub fn trace_digest(&self) -> Digest {
        let mut h = self.trace.clone();
        h.update(self.trace_events.to_be_bytes());
        Digest(h.finalize().into())
    }

    fn send_all(&mut self, messages: Vec<Message>) {
        for msg in messages {
            self.messages_sent += 1;
            let now = self.now;
            let header = [msg.from.to_be_bytes(), msg.to.to_be_bytes()].concat();
            let kind = msg.body.kind().as_bytes();
            let term = msg.term.to_be_bytes();
            if let Some(reason) = self.net.send(msg, now) {
                self.messages_dropped += 1;
                self.record(&[
                    b"drop",
                    &now.to_be_bytes(),
                    &header,
                    kind,
                    &term,
                    &[reason as u8],
                ]);
            } else {
                self.record(&[b"send", &now.to_be_bytes(), &header, kind, &term]);
            }
        }
    }

    /// Advances logical time by one tick: crash transitions, message
    /// delivery, timers, then applying committed roots.
    pub fn tick(&mut self) -> TickEvents {
        self.now += 1;
        let now = self.now;
        let mut events = TickEvents {
            tick: now,
            ..TickEvents::default()
        };

        for i in 0..self.nodes.len() {
            let id = i as NodeId;
            let down = self
                .config
                .crashes
                .iter()
                .any(|c| c.node == id && now >= c.start_tick && now < c.end_tick);
            if self.down[i] && !down {
                self.nodes[i].restart(now);
                self.record(&[b"restart", &now.to_be_bytes(), &id.to_be_bytes()]);
            } else if !self.down[i] && down {
                self.record(&[b"crash", &now.to_be_bytes(), &id.to_be_bytes()]);
            }
            self.down[i] = down;
        }

        let was_leader: Vec<Option<u64>> = self
            .nodes
            .iter()
            .map(|n| n.is_leader().then(|| n.current_term()))
            .collect();

        for delivery in self.net.deliver_due(now) {
            let msg = match delivery {
                Ok(msg) if !self.down[msg.to as usize] => msg,
                Ok(msg) | Err((msg, _)) => {
                    events.dropped += 1;
                    self.messages_dropped += 1;
                    let reason = if self.down[msg.to as usize] {
                        2
                    } else {
                        DropReason::Partition as u8
                    };
                    self.record(&[
                        b"lost",
                        &now.to_be_bytes(),
                        &msg.from.to_be_bytes(),
                        &msg.to.to_be_bytes(),
                        &[reason],
                    ]);
                    continue;
                }
            };
            events.delivered += 1;
            self.record(&[
                b"recv",
                &now.to_be_bytes(),
                &msg.from.to_be_bytes(),
                &msg.to.to_be_bytes(),
                msg.body.kind().as_bytes(),
            ]);
            let to = msg.to as usize;
            let out = self.nodes[to].step(msg);
            self.send_all(out);
        }

        for i in 0..self.nodes.len() {
            if self.down[i] {
                continue;
            }
            let out = self.nodes[i].tick(now);
            self.send_all(out);
        }

        let elected: Vec<(NodeId, u64)> = self
            .nodes
            .iter()
            .zip(&was_leader)
            .filter(|(node, was)| node.is_leader() && **was != Some(node.current_term()))
            .map(|(node, _)| (node.id(), node.current_term()))
            .collect();
        for (id, term) in elected {
            events.new_leaders.push((id, term));
            self.record(&[
                b"leader",
                &now.to_be_bytes(),
                &id.to_be_bytes(),
                &term.to_be_bytes(),
            ]);
        }

        for i in 0..self.nodes.len() {
            if self.down[i] {
                continue;
            }
            match self.nodes[i].apply_committed() {
                Ok(blocks) => {
                    for block in blocks {
                        self.record(&[
                            b"apply",
                            &now.to_be_bytes(),
                            &(i as NodeId).to_be_bytes(),
                            block.block_id.as_bytes(),
                        ]);
                        events.applied.push((i as NodeId, block));
                    }
                }
                Err(e) => log::warn!("node {i}: block store write failed, will retry: {e}"),
            }
        }

        if self.config.monitor {
            let live: Vec<&RaftNode> = self
                .nodes
                .iter()
                .filter(|n| !self.down[n.id() as usize])
                .collect();
            self.monitor.observe(now, live.iter().copied());
        }
        events
    }

    pub fn run_ticks(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.tick();
        }
    }

    /// Ticks until a live leader exists; returns it, or `None` after
    /// `max_ticks`.
    pub fn run_until_leader(&mut self, max_ticks: u64) -> Option<NodeId> {
        for _ in 0..max_ticks {
            if let Some(l) = self.leader() {
                return Some(l);
            }
            self.tick();
        }
        self.leader()
    }

    fn committed_somewhere(&self, log_index: u64, term: u64) -> bool {
        self.nodes.iter().any(|n| {
            n.commit_index() >= log_index && n.entry(log_index).is_some_and(|e| e.term == term)
        })
    }

    /// Submits `root` for `cycle` through node `entry`, following
    /// redirects, and ticks until it commits or the timeout runs out.
    pub fn propose_root_via(
        &mut self,
        entry: NodeId,
        cycle: u64,
        root: Digest,
    ) -> Result<CommitResult, LedgerError> {
        if entry >= self.config.node_count {
            return Err(LedgerError::InvalidConfig(format!("no node {entry}")));
        }
        let started = self.now;
        let deadline = started + self.config.propose_timeout_ticks;
        let mut redirected_from = None;
        let mut pending: Option<(NodeId, u64, u64)> = None;

        while self.now < deadline {
            if let Some((leader, log_index, term)) = pending {
                if self.committed_somewhere(log_index, term) {
                    let node = self
                        .nodes
                        .iter()
                        .find(|n| n.entry(log_index).is_some_and(|e| e.term == term))
                        .expect("committed entry is held by some node");
                    let index = node.block_index_of(log_index);
                    return Ok(CommitResult {
                        committed: true,
                        index,
                        log_index,
                        term,
                        redirected_from,
                        ticks: self.now - started,
                    });
                }
                let still_valid = self.nodes.iter().any(|n| {
                    n.is_leader() && n.current_term() == term && !self.down[n.id() as usize]
                });
                let overwritten = !self.nodes[leader as usize]
                    .entry(log_index)
                    .is_some_and(|e| e.term == term);
                if !still_valid || overwritten {
                    // The leader that took the proposal lost its term; ask again.
                    pending = None;
                }
            }
            if pending.is_none() {
                let mut target = entry;
                for _ in 0..=self.config.node_count {
                    if self.down[target as usize] {
                        break;
                    }
                    let now = self.now;
                    match self.nodes[target as usize].propose(cycle, root, now) {
                        ProposeOutcome::Appended {
                            log_index,
                            term,
                            messages,
                        } => {
                            self.record(&[
                                b"propose",
                                &now.to_be_bytes(),
                                &target.to_be_bytes(),
                                root.as_bytes(),
                            ]);
                            self.send_all(messages);
                            pending = Some((target, log_index, term));
                            break;
                        }
                        ProposeOutcome::Duplicate { log_index, term } => {
                            pending = Some((target, log_index, term));
                            break;
                        }
                        ProposeOutcome::NotLeader {
                            leader_hint: Some(hint),
                        } => {
                            redirected_from.get_or_insert(entry);
                            target = hint;
                        }
                        ProposeOutcome::NotLeader { leader_hint: None } => break,
                    }
                }
                if let Some((_, log_index, term)) = pending {
                    if self.committed_somewhere(log_index, term) {
                        continue;
                    }
                }
            }
            self.tick();
        }
        Err(LedgerError::Unavailable {
            ticks: self.config.propose_timeout_ticks,
        })
    }

    /// Submits through the current leader if one is known, else node 0.
    pub fn propose_root(&mut self, cycle: u64, root: Digest) -> Result<CommitResult, LedgerError> {
        let entry = self.leader().unwrap_or(0);
        self.propose_root_via(entry, cycle, root)
    }

    /// Ticks until every live node has applied everything committed, up
    /// to `max_ticks`. Returns whether that point was reached.
    pub fn settle(&mut self, max_ticks: u64) -> bool {
        for _ in 0..max_ticks {
            let target = self
                .nodes
                .iter()
                .map(|n| n.commit_index())
                .max()
                .unwrap_or(0);
            let done = self
                .nodes
                .iter()
                .filter(|n| !self.down[n.id() as usize])
                .all(|n| n.last_applied() >= target && n.log().len() as u64 >= target);
            if done && target > 0 {
                return true;
            }
            self.tick();
        }
        false
    }

    pub fn query_root(&self, node: NodeId, root: &Digest) -> QueryResult {
        self.nodes[node as usize].query_root(root)
    }

    pub fn safety_report(&self) -> SafetyReport {
        self.monitor.report()
    }

    /// Blocks of each node as JSON lines, for byte-level comparison.
    pub fn store_lines(&self) -> Vec<String> {
        self.nodes
            .iter()
            .map(|n| {
                n.store()
                    .blocks()
                    .iter()
                    .map(|b| serde_json::to_string(b).expect("block serializes") + "\n")
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn healthy(nodes: u32, seed: u64) -> Cluster {
        Cluster::new(SimConfig {
            node_count: nodes,
            seed,
            ..SimConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn even_node_count_is_rejected() {
        assert!(matches!(
            Cluster::new(SimConfig {
                node_count: 4,
                ..SimConfig::default()
            }),
            Err(LedgerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn first_proposal_lands_at_block_one() {
        let mut c = healthy(3, 7);
        let r = c.propose_root(0, Digest([4; 32])).unwrap();
        assert!(r.committed);
        assert_eq!(r.index, 1);
        assert!(r.term >= 1);
        assert!(c.settle(100));
        for n in c.nodes() {
            assert_eq!(n.query_root(&Digest([4; 32])).block_index, Some(1));
        }
    }

    #[test]
    fn follower_redirects_to_leader() {
        let mut c = healthy(3, 11);
        let leader = c.run_until_leader(200).unwrap();
        // Let the heartbeat reach followers so they know the leader.
        c.run_ticks(10);
        let follower = (leader + 1) % 3;
        let r = c.propose_root_via(follower, 0, Digest([5; 32])).unwrap();
        assert_eq!(r.redirected_from, Some(follower));
        assert!(r.committed);
    }

    #[test]
    fn duplicate_proposal_commits_once() {
        let mut c = healthy(3, 2);
        let a = c.propose_root(3, Digest([6; 32])).unwrap();
        let b = c.propose_root(3, Digest([6; 32])).unwrap();
        assert_eq!(a.log_index, b.log_index);
        c.settle(100);
        assert_eq!(c.node(0).store().root_count(), 1);
    }

    #[test]
    fn same_seed_same_trace() {
        let run = |seed| {
            let mut c = healthy(5, seed);
            let leader = c.run_until_leader(500).unwrap();
            (leader, c.now(), c.trace_digest())
        };
        assert_eq!(run(42), run(42));
        let (_, ticks, _) = run(42);
        assert!(ticks > 0);
    }

    #[test]
    fn single_node_commits_alone() {
        let mut c = healthy(1, 0);
        let r = c.propose_root(0, Digest([1; 32])).unwrap();
        assert_eq!(r.index, 1);
        assert!(r.ticks <= 2);
    }

    #[test]
    fn stores_are_identical_across_nodes() {
        let mut c = healthy(3, 9);
        for i in 0..10u8 {
            c.propose_root(u64::from(i), Digest([i; 32])).unwrap();
        }
        assert!(c.settle(200));
        let lines = c.store_lines();
        assert!(lines.iter().all(|l| *l == lines[0]));
        assert!(c.safety_report().is_safe());
    }

    #[test]
    fn lagging_node_finds_root_only_after_apply() {
        let mut c = Cluster::new(SimConfig {
            node_count: 3,
            seed: 5,
            crashes: vec![CrashWindow {
                node: 2,
                start_tick: 0,
                end_tick: 150,
            }],
            ..SimConfig::default()
        })
        .unwrap();
        let root = Digest([8; 32]);
        let r = c.propose_root_via(0, 0, root).unwrap();
        assert!(r.committed);
        assert!(!c.query_root(2, &root).found);
        while c.now() < 150 {
            c.tick();
        }
        c.settle(200);
        assert_eq!(c.query_root(2, &root).block_index, Some(1));
    }
}
