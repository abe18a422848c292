use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::merkle::Digest;

use super::block::Block;
use super::store::{BlockStore, QueryResult};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

/// Root committed for one relay cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RootPayload {
    pub cycle: u64,
    pub root: Digest,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub term: u64,
    /// `None` is the no-op a new leader appends to commit earlier terms.
    pub payload: Option<RootPayload>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageBody {
    RequestVote {
        last_log_index: u64,
        last_log_term: u64,
    },
    RequestVoteResponse {
        granted: bool,
    },
    AppendEntries {
        prev_log_index: u64,
        prev_log_term: u64,
        entries: Vec<LogEntry>,
        leader_commit: u64,
    },
    /// On failure `match_index` is the follower's hint for where to retry.
    AppendEntriesResponse {
        success: bool,
        match_index: u64,
    },
}

impl MessageBody {
    pub fn kind(&self) -> &'static str {
        match self {
            MessageBody::RequestVote { .. } => "vote",
            MessageBody::RequestVoteResponse { .. } => "vote-resp",
            MessageBody::AppendEntries { .. } => "append",
            MessageBody::AppendEntriesResponse { .. } => "append-resp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub from: NodeId,
    pub to: NodeId,
    pub term: u64,
    pub body: MessageBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaftConfig {
    /// Election timeout drawn uniformly from `[min, max)` ticks each round.
    pub election_timeout: (u64, u64),
    pub heartbeat_interval: u64,
    /// Every node's first deadline is `election_timeout.0`, so the first
    /// election starts everywhere at once.
    pub uniform_first_timeout: bool,
}

impl Default for RaftConfig {
    fn default() -> Self {
        RaftConfig {
            election_timeout: (10, 20),
            heartbeat_interval: 3,
            uniform_first_timeout: false,
        }
    }
}

/// What happened to a proposal handed to a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProposeOutcome {
    Appended {
        log_index: u64,
        term: u64,
        messages: Vec<Message>,
    },
    /// The same cycle and root is already in the leader's log.
    Duplicate {
        log_index: u64,
        term: u64,
    },
    NotLeader {
        leader_hint: Option<NodeId>,
    },
}

/// Single-threaded, message-driven Raft state machine replicating roots.
#[derive(Debug)]
pub struct RaftNode {
    id: NodeId,
    peers: Vec<NodeId>,
    config: RaftConfig,
    rng: ChaCha8Rng,

    // Persistent.
    current_term: u64,
    voted_for: Option<NodeId>,
    log: Vec<LogEntry>,
    store: BlockStore,

    // Volatile.
    role: Role,
    leader_id: Option<NodeId>,
    commit_index: u64,
    last_applied: u64,
    election_deadline: u64,
    heartbeat_due: u64,
    votes: BTreeSet<NodeId>,
    next_index: BTreeMap<NodeId, u64>,
    match_index: BTreeMap<NodeId, u64>,
    now: u64,
}

impl RaftNode {
    pub fn new(
        id: NodeId,
        peers: Vec<NodeId>,
        config: RaftConfig,
        seed: u64,
        store: BlockStore,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(
            seed ^ (u64::from(id) + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        let mut node = RaftNode {
            id,
            peers,
            config,
            rng,
            current_term: 0,
            voted_for: None,
            log: Vec::new(),
            store,
            role: Role::Follower,
            leader_id: None,
            commit_index: 0,
            last_applied: 0,
            election_deadline: 0,
            heartbeat_due: 0,
            votes: BTreeSet::new(),
            next_index: BTreeMap::new(),
            match_index: BTreeMap::new(),
            now: 0,
        };
        node.election_deadline = if node.peers.is_empty() {
            1
        } else if config.uniform_first_timeout {
            config.election_timeout.0
        } else {
            node.random_timeout()
        };
        node
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn is_leader(&self) -> bool {
        self.role == Role::Leader
    }

    pub fn current_term(&self) -> u64 {
        self.current_term
    }

    pub fn voted_for(&self) -> Option<NodeId> {
        self.voted_for
    }

    pub fn leader_id(&self) -> Option<NodeId> {
        self.leader_id
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn commit_index(&self) -> u64 {
        self.commit_index
    }

    pub fn last_applied(&self) -> u64 {
        self.last_applied
    }

    pub fn election_deadline(&self) -> u64 {
        self.election_deadline
    }

    pub fn store(&self) -> &BlockStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut BlockStore {
        &mut self.store
    }

    fn majority(&self) -> usize {
        let n = self.peers.len() + 1;
        n / 2 + 1
    }

    fn random_timeout(&mut self) -> u64 {
        let (lo, hi) = self.config.election_timeout;
        self.now
            + if hi > lo {
                self.rng.gen_range(lo..hi)
            } else {
                lo
            }
    }

    fn last_log_index(&self) -> u64 {
        self.log.len() as u64
    }

    fn term_at(&self, index: u64) -> u64 {
        if index == 0 {
            0
        } else {
            self.log.get(index as usize - 1).map_or(0, |e| e.term)
        }
    }

    pub fn entry(&self, index: u64) -> Option<&LogEntry> {
        index.checked_sub(1).and_then(|i| self.log.get(i as usize))
    }

    /// Roots (non-no-op entries) in `log[..=index]`: the block index an
    /// entry becomes once applied.
    pub fn block_index_of(&self, index: u64) -> u64 {
        self.log[..index as usize]
            .iter()
            .filter(|e| e.payload.is_some())
            .count() as u64
    }

    fn message(&self, to: NodeId, body: MessageBody) -> Message {
        Message {
            from: self.id,
            to,
            term: self.current_term,
            body,
        }
    }

    fn become_follower(&mut self, term: u64) {
        if term > self.current_term {
            self.current_term = term;
            self.voted_for = None;
        }
        self.role = Role::Follower;
        self.votes.clear();
    }

    fn become_leader(&mut self) -> Vec<Message> {
        self.role = Role::Leader;
        self.leader_id = Some(self.id);
        let next = self.last_log_index() + 1;
        for &peer in &self.peers {
            self.next_index.insert(peer, next);
            self.match_index.insert(peer, 0);
        }
        self.log.push(LogEntry {
            term: self.current_term,
            payload: None,
        });
        self.advance_commit();
        self.heartbeat_due = self.now + self.config.heartbeat_interval;
        self.broadcast_append()
    }

    fn start_election(&mut self) -> Vec<Message> {
        self.current_term += 1;
        self.role = Role::Candidate;
        self.voted_for = Some(self.id);
        self.leader_id = None;
        self.votes = BTreeSet::from([self.id]);
        self.election_deadline = self.random_timeout();
        if self.votes.len() >= self.majority() {
            return self.become_leader();
        }
        let body = MessageBody::RequestVote {
            last_log_index: self.last_log_index(),
            last_log_term: self.term_at(self.last_log_index()),
        };
        self.peers
            .iter()
            .map(|&p| self.message(p, body.clone()))
            .collect()
    }

    fn append_for(&self, peer: NodeId) -> Message {
        let next = self.next_index.get(&peer).copied().unwrap_or(1).max(1);
        let prev_log_index = next - 1;
        let entries = self.log[prev_log_index as usize..].to_vec();
        self.message(
            peer,
            MessageBody::AppendEntries {
                prev_log_index,
                prev_log_term: self.term_at(prev_log_index),
                entries,
                leader_commit: self.commit_index,
            },
        )
    }

    fn broadcast_append(&self) -> Vec<Message> {
        self.peers.iter().map(|&p| self.append_for(p)).collect()
    }

    fn advance_commit(&mut self) {
        for n in (self.commit_index + 1..=self.last_log_index()).rev() {
            if self.term_at(n) != self.current_term {
                break;
            }
            let replicas = 1 + self.match_index.values().filter(|&&m| m >= n).count();
            if replicas >= self.majority() {
                self.commit_index = n;
                break;
            }
        }
    }

    /// Timers: election timeout for followers and candidates, heartbeats
    /// for the leader.
    pub fn tick(&mut self, now: u64) -> Vec<Message> {
        self.now = now;
        match self.role {
            Role::Leader => {
                if now >= self.heartbeat_due {
                    self.heartbeat_due = now + self.config.heartbeat_interval;
                    self.broadcast_append()
                } else {
                    Vec::new()
                }
            }
            Role::Follower | Role::Candidate => {
                if now >= self.election_deadline {
                    self.start_election()
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// Handles one message addressed to this node.
    pub fn step(&mut self, msg: Message) -> Vec<Message> {
        debug_assert_eq!(msg.to, self.id);
        if msg.term > self.current_term {
            self.become_follower(msg.term);
            self.leader_id = None;
        }
        match msg.body {
            MessageBody::RequestVote {
                last_log_index,
                last_log_term,
            } => {
                let my_last = self.last_log_index();
                let my_term = self.term_at(my_last);
                let up_to_date = last_log_term > my_term
                    || (last_log_term == my_term && last_log_index >= my_last);
                let granted = msg.term == self.current_term
                    && self.voted_for.is_none_or(|v| v == msg.from)
                    && up_to_date;
                if granted {
                    self.voted_for = Some(msg.from);
                    self.election_deadline = self.random_timeout();
                }
                vec![self.message(msg.from, MessageBody::RequestVoteResponse { granted })]
            }
            MessageBody::RequestVoteResponse { granted } => {
                if self.role == Role::Candidate && msg.term == self.current_term && granted {
                    self.votes.insert(msg.from);
                    if self.votes.len() >= self.majority() {
                        return self.become_leader();
                    }
                }
                Vec::new()
            }
            MessageBody::AppendEntries {
                prev_log_index,
                prev_log_term,
                entries,
                leader_commit,
            } => {
                if msg.term < self.current_term {
                    return vec![self.message(
                        msg.from,
                        MessageBody::AppendEntriesResponse {
                            success: false,
                            match_index: self.last_log_index(),
                        },
                    )];
                }
                self.become_follower(msg.term);
                self.leader_id = Some(msg.from);
                self.election_deadline = self.random_timeout();

                if prev_log_index > self.last_log_index() {
                    return vec![self.message(
                        msg.from,
                        MessageBody::AppendEntriesResponse {
                            success: false,
                            match_index: self.last_log_index(),
                        },
                    )];
                }
                if self.term_at(prev_log_index) != prev_log_term {
                    return vec![self.message(
                        msg.from,
                        MessageBody::AppendEntriesResponse {
                            success: false,
                            match_index: prev_log_index.saturating_sub(1),
                        },
                    )];
                }
                for (offset, entry) in entries.iter().enumerate() {
                    let index = prev_log_index + 1 + offset as u64;
                    match self.entry(index) {
                        Some(existing) if existing.term == entry.term => {}
                        Some(_) => {
                            self.log.truncate(index as usize - 1);
                            self.log.push(*entry);
                        }
                        None => self.log.push(*entry),
                    }
                }
                let last_new = prev_log_index + entries.len() as u64;
                if leader_commit > self.commit_index {
                    self.commit_index = leader_commit.min(last_new);
                }
                vec![self.message(
                    msg.from,
                    MessageBody::AppendEntriesResponse {
                        success: true,
                        match_index: last_new,
                    },
                )]
            }
            MessageBody::AppendEntriesResponse {
                success,
                match_index,
            } => {
                if self.role != Role::Leader || msg.term != self.current_term {
                    return Vec::new();
                }
                if success {
                    let m = self.match_index.entry(msg.from).or_insert(0);
                    *m = (*m).max(match_index);
                    let m = *m;
                    self.next_index.insert(msg.from, m + 1);
                    self.advance_commit();
                    Vec::new()
                } else {
                    let next = self.next_index.get(&msg.from).copied().unwrap_or(1);
                    let retry = (match_index + 1).min(next.saturating_sub(1)).max(1);
                    self.next_index.insert(msg.from, retry);
                    vec![self.append_for(msg.from)]
                }
            }
        }
    }

    /// Leader-side entry point for a root. Same cycle and root already in
    /// the log is not appended twice.
    pub fn propose(&mut self, cycle: u64, root: Digest, now: u64) -> ProposeOutcome {
        self.now = now;
        if self.role != Role::Leader {
            return ProposeOutcome::NotLeader {
                leader_hint: self.leader_id.filter(|&l| l != self.id),
            };
        }
        if let Some(pos) = self.log.iter().position(|e| {
            e.payload
                .is_some_and(|p| p.cycle == cycle && p.root == root)
        }) {
            return ProposeOutcome::Duplicate {
                log_index: pos as u64 + 1,
                term: self.log[pos].term,
            };
        }
        self.log.push(LogEntry {
            term: self.current_term,
            payload: Some(RootPayload {
                cycle,
                root,
                timestamp: now,
            }),
        });
        self.advance_commit();
        self.heartbeat_due = now + self.config.heartbeat_interval;
        ProposeOutcome::Appended {
            log_index: self.last_log_index(),
            term: self.current_term,
            messages: self.broadcast_append(),
        }
    }

    /// Turns newly committed roots into blocks. Stops at the first store
    /// failure without advancing past the failed entry.
    pub fn apply_committed(&mut self) -> std::io::Result<Vec<Block>> {
        let mut applied = Vec::new();
        while self.last_applied < self.commit_index {
            let index = self.last_applied + 1;
            let entry = self.log[index as usize - 1];
            if let Some(payload) = entry.payload {
                let block = Block::next(self.store.last(), payload.timestamp, payload.root);
                self.store.append(block.clone())?;
                applied.push(block);
            }
            self.last_applied = index;
        }
        Ok(applied)
    }

    pub fn query_root(&self, root: &Digest) -> QueryResult {
        self.store.query_root(root)
    }

    /// Restart after a crash: persistent state survives, volatile state
    /// is rebuilt. Applied blocks are durable, so they count as committed.
    pub fn restart(&mut self, now: u64) {
        self.now = now;
        self.role = Role::Follower;
        self.leader_id = None;
        self.votes.clear();
        self.next_index.clear();
        self.match_index.clear();
        self.commit_index = self.last_applied;
        self.election_deadline = self.random_timeout();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: NodeId, peers: &[NodeId]) -> RaftNode {
        RaftNode::new(
            id,
            peers.to_vec(),
            RaftConfig::default(),
            1,
            BlockStore::in_memory(),
        )
    }

    #[test]
    fn stale_vote_request_is_rejected() {
        let mut n = node(1, &[0, 2]);
        n.become_follower(5);
        let out = n.step(Message {
            from: 0,
            to: 1,
            term: 3,
            body: MessageBody::RequestVote {
                last_log_index: 10,
                last_log_term: 3,
            },
        });
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].term, 5);
        assert_eq!(
            out[0].body,
            MessageBody::RequestVoteResponse { granted: false }
        );
        assert_eq!(n.current_term(), 5);
        assert_eq!(n.voted_for(), None);
    }

    #[test]
    fn one_vote_per_term() {
        let mut n = node(1, &[0, 2]);
        let ask = |from| Message {
            from,
            to: 1,
            term: 1,
            body: MessageBody::RequestVote {
                last_log_index: 0,
                last_log_term: 0,
            },
        };
        let a = n.step(ask(0));
        let b = n.step(ask(2));
        assert_eq!(
            a[0].body,
            MessageBody::RequestVoteResponse { granted: true }
        );
        assert_eq!(
            b[0].body,
            MessageBody::RequestVoteResponse { granted: false }
        );
        // Repeated request from the same candidate is granted again.
        assert_eq!(
            n.step(ask(0))[0].body,
            MessageBody::RequestVoteResponse { granted: true }
        );
    }

    #[test]
    fn heartbeat_resets_election_deadline() {
        let mut n = node(1, &[0, 2]);
        n.tick(8);
        let out = n.step(Message {
            from: 0,
            to: 1,
            term: 1,
            body: MessageBody::AppendEntries {
                prev_log_index: 0,
                prev_log_term: 0,
                entries: vec![],
                leader_commit: 0,
            },
        });
        assert_eq!(
            out[0].body,
            MessageBody::AppendEntriesResponse {
                success: true,
                match_index: 0
            }
        );
        assert!(n.election_deadline() >= 8 + 10);
        assert_eq!(n.leader_id(), Some(0));
    }

    #[test]
    fn single_node_elects_itself_on_first_tick() {
        let mut n = node(0, &[]);
        assert!(n.tick(1).is_empty());
        assert!(n.is_leader());
        let ProposeOutcome::Appended { log_index, .. } = n.propose(0, Digest([1; 32]), 1) else {
            panic!()
        };
        assert_eq!(n.commit_index(), log_index);
        let blocks = n.apply_committed().unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].index, 1);
        assert_eq!(blocks[0].prev_hash, Block::genesis().block_id);
        assert!(matches!(
            n.propose(0, Digest([1; 32]), 2),
            ProposeOutcome::Duplicate { .. }
        ));
    }

    #[test]
    fn failed_store_write_does_not_advance_apply() {
        let mut n = node(0, &[]);
        n.tick(1);
        n.propose(0, Digest([1; 32]), 1);
        n.store_mut().fail_next_writes(1);
        assert!(n.apply_committed().is_err());
        let applied_before = n.last_applied();
        assert!(applied_before < n.commit_index());
        assert_eq!(n.apply_committed().unwrap().len(), 1);
        assert_eq!(n.last_applied(), n.commit_index());
    }

    /// Leader with a divergent uncommitted suffix on the follower: the
    /// follower rejects, the leader backs off, and the logs converge.
    #[test]
    fn divergent_logs_converge_to_leader() {
        let mut leader = node(0, &[1]);
        let mut follower = node(1, &[0]);
        // Follower holds stale entries from term 1 that never committed.
        follower.log = vec![
            LogEntry {
                term: 1,
                payload: None,
            },
            LogEntry {
                term: 1,
                payload: Some(RootPayload {
                    cycle: 9,
                    root: Digest([9; 32]),
                    timestamp: 0,
                }),
            },
            LogEntry {
                term: 1,
                payload: Some(RootPayload {
                    cycle: 10,
                    root: Digest([10; 32]),
                    timestamp: 0,
                }),
            },
        ];
        follower.current_term = 1;
        leader.log = vec![
            LogEntry {
                term: 1,
                payload: None,
            },
            LogEntry {
                term: 2,
                payload: None,
            },
        ];
        leader.current_term = 2;
        leader.role = Role::Candidate;
        leader.current_term = 2;
        leader.votes = BTreeSet::from([0]);
        let mut inflight = leader.step(Message {
            from: 1,
            to: 0,
            term: 2,
            body: MessageBody::RequestVoteResponse { granted: true },
        });
        assert!(leader.is_leader());
        let ProposeOutcome::Appended { messages, .. } = leader.propose(3, Digest([3; 32]), 5)
        else {
            panic!()
        };
        inflight.extend(messages);
        let mut rejections = 0;
        for _ in 0..20 {
            let mut next = Vec::new();
            for m in inflight.drain(..) {
                let target = if m.to == 0 {
                    &mut leader
                } else {
                    &mut follower
                };
                if matches!(
                    m.body,
                    MessageBody::AppendEntriesResponse { success: false, .. }
                ) {
                    rejections += 1;
                }
                next.extend(target.step(m));
            }
            inflight = next;
            if inflight.is_empty() {
                break;
            }
        }
        assert!(rejections >= 1);
        assert_eq!(follower.log(), leader.log());
        assert_eq!(leader.commit_index(), leader.log().len() as u64);
    }
}
