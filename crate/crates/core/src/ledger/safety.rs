use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::merkle::Digest;

use super::raft::{LogEntry, NodeId, RaftNode};

/// Checks the Raft safety properties against cluster snapshots.
#[derive(Debug, Default, Clone)]
pub struct SafetyMonitor {
    leaders: BTreeMap<u64, NodeId>,
    committed: BTreeMap<u64, LogEntry>,
    applied_roots: BTreeMap<u64, Digest>,
    violations: Vec<String>,
    checks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub checks: u64,
    pub terms_with_leader: u64,
    pub committed_entries: u64,
    pub applied_blocks: u64,
    pub violations: Vec<String>,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

impl SafetyMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    /// Records the state of every live node at `tick`.
    pub fn observe<'a>(
        &mut self,
        tick: u64,
        nodes: impl IntoIterator<Item = &'a RaftNode> + Clone,
    ) {
        self.checks += 1;
        for node in nodes.clone() {
            self.check_election(tick, node);
            self.check_committed(tick, node);
            self.check_applied(tick, node);
        }
        let all: Vec<&RaftNode> = nodes.into_iter().collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                self.check_log_matching(tick, a, b);
            }
        }
        for node in &all {
            if node.is_leader() {
                self.check_leader_completeness(tick, node);
            }
        }
    }

    fn check_election(&mut self, tick: u64, node: &RaftNode) {
        if !node.is_leader() {
            return;
        }
        let term = node.current_term();
        match self.leaders.get(&term) {
            Some(&other) if other != node.id() => self.violations.push(format!(
                "tick {tick}: election safety: nodes {other} and {} both lead term {term}",
                node.id()
            )),
            Some(_) => {}
            None => {
                self.leaders.insert(term, node.id());
            }
        }
    }

    fn check_committed(&mut self, tick: u64, node: &RaftNode) {
        for index in 1..=node.commit_index() {
            let Some(entry) = node.entry(index) else {
                self.violations.push(format!(
                    "tick {tick}: node {} commit index {} beyond its log",
                    node.id(),
                    node.commit_index()
                ));
                return;
            };
            match self.committed.get(&index) {
                Some(known) if known != entry => self.violations.push(format!(
                    "tick {tick}: node {} committed a different entry at index {index}",
                    node.id()
                )),
                Some(_) => {}
                None => {
                    self.committed.insert(index, *entry);
                }
            }
        }
    }

    fn check_applied(&mut self, tick: u64, node: &RaftNode) {
        for block in node.store().blocks().iter().skip(1) {
            match self.applied_roots.get(&block.index) {
                Some(root) if *root != block.merkle_root => self.violations.push(format!(
                    "tick {tick}: state machine safety: node {} applied {} at block {}, others {}",
                    node.id(),
                    block.merkle_root,
                    block.index,
                    root
                )),
                Some(_) => {}
                None => {
                    self.applied_roots.insert(block.index, block.merkle_root);
                }
            }
        }
    }

    fn check_log_matching(&mut self, tick: u64, a: &RaftNode, b: &RaftNode) {
        let common = a.log().len().min(b.log().len());
        let Some(last_match) = (0..common)
            .rev()
            .find(|&i| a.log()[i].term == b.log()[i].term)
        else {
            return;
        };
        if a.log()[..=last_match] != b.log()[..=last_match] {
            self.violations.push(format!(
                "tick {tick}: log matching: nodes {} and {} agree on term at index {} but differ before it",
                a.id(),
                b.id(),
                last_match + 1
            ));
        }
    }

    fn check_leader_completeness(&mut self, tick: u64, leader: &RaftNode) {
        for (&index, entry) in &self.committed {
            if entry.term < leader.current_term() && leader.entry(index) != Some(entry) {
                self.violations.push(format!(
                    "tick {tick}: leader completeness: leader {} of term {} lacks committed index {index}",
                    leader.id(),
                    leader.current_term()
                ));
                return;
            }
        }
    }

    pub fn report(&self) -> SafetyReport {
        SafetyReport {
            checks: self.checks,
            terms_with_leader: self.leaders.len() as u64,
            committed_entries: self.committed.len() as u64,
            applied_blocks: self.applied_roots.len() as u64,
            violations: self.violations.clone(),
        }
    }
}
