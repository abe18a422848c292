use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use crate::merkle::{Inserted, MerkleError, SparseTrie};

use super::collector::SealedCycle;
use super::dump::{write_leaf_dump, LeafRecord};
use super::pop::ProofOfProvenance;
use super::publisher::RootPublisher;
use super::{CycleRoot, PeriodSummary, RelayConfig, RelayError, Strategy};

/// Cost of building one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CloseStats {
    pub cycle_index: u64,
    pub elapsed: Duration,
    /// Hash evaluations spent inserting this cycle's pairs.
    pub hash_ops: u64,
}

#[derive(Debug)]
enum TrieStore {
    /// One trie per period; each cycle is an epoch of it.
    Cumulative(SparseTrie),
    /// A fresh trie per cycle.
    PerCycle(BTreeMap<u64, SparseTrie>),
}

#[derive(Debug)]
struct PeriodState {
    index: u64,
    start_cycle: u64,
    closed: Vec<CycleRoot>,
    store: TrieStore,
    records: Vec<LeafRecord>,
}

impl PeriodState {
    fn new(index: u64, start_cycle: u64, strategy: Strategy) -> Self {
        let store = match strategy {
            Strategy::Novel => TrieStore::Cumulative(SparseTrie::new()),
            Strategy::Legacy => TrieStore::PerCycle(BTreeMap::new()),
        };
        PeriodState {
            index,
            start_cycle,
            closed: Vec::new(),
            store,
            records: Vec::new(),
        }
    }

    fn holds(&self, cycle: u64) -> bool {
        cycle >= self.start_cycle && cycle < self.start_cycle + self.closed.len() as u64
    }
}

/// Builds tries from sealed cycles, publishes roots and serves proofs.
pub struct Builder {
    config: RelayConfig,
    periods: VecDeque<PeriodState>,
    archive: Vec<CycleRoot>,
    publisher: Box<dyn RootPublisher + Send>,
    pending: VecDeque<CycleRoot>,
    ready: Vec<ProofOfProvenance>,
    last_close: Option<CloseStats>,
}

impl Builder {
    pub fn new(
        config: RelayConfig,
        publisher: Box<dyn RootPublisher + Send>,
    ) -> Result<Self, RelayError> {
        config.validate()?;
        let first = PeriodState::new(0, 0, config.strategy);
        Ok(Builder {
            config,
            periods: VecDeque::from([first]),
            archive: Vec::new(),
            publisher,
            pending: VecDeque::new(),
            ready: Vec::new(),
            last_close: None,
        })
    }

    pub fn config(&self) -> &RelayConfig {
        &self.config
    }

    fn current(&self) -> &PeriodState {
        self.periods.back().expect("at least one period")
    }

    fn current_mut(&mut self) -> &mut PeriodState {
        self.periods.back_mut().expect("at least one period")
    }

    pub fn period_index(&self) -> u64 {
        self.current().index
    }

    pub fn period_full(&self) -> bool {
        self.current().closed.len() as u64 >= self.config.cycles_per_period
    }

    pub fn next_cycle(&self) -> u64 {
        let p = self.current();
        p.start_cycle + p.closed.len() as u64
    }

    pub fn latest_closed(&self) -> Option<u64> {
        self.archive.last().map(|r| r.cycle_index)
    }

    /// Every root closed so far, in cycle order.
    pub fn archived_roots(&self) -> &[CycleRoot] {
        &self.archive
    }

    pub fn roots_of_period(&self, period: u64) -> Vec<CycleRoot> {
        self.archive
            .iter()
            .filter(|r| r.period_index == period)
            .cloned()
            .collect()
    }

    pub fn pending_publications(&self) -> usize {
        self.pending.len()
    }

    pub fn last_close(&self) -> Option<CloseStats> {
        self.last_close
    }

    pub fn take_ready_proofs(&mut self) -> Vec<ProofOfProvenance> {
        std::mem::take(&mut self.ready)
    }

    /// Builds the trie for `sealed`, archives its root and forwards it to
    /// the publisher. A publisher failure leaves the root buffered; the
    /// cycle still closes.
    pub fn close(&mut self, sealed: SealedCycle, closed_at: u64) -> Result<CycleRoot, RelayError> {
        if self.period_full() {
            return Err(RelayError::InvalidState(format!(
                "period {} already holds {} cycles; rotate first",
                self.period_index(),
                self.config.cycles_per_period
            )));
        }
        let expected = self.next_cycle();
        if sealed.cycle_index != expected {
            return Err(RelayError::InvalidState(format!(
                "expected cycle {expected}, got {}",
                sealed.cycle_index
            )));
        }

        let started = Instant::now();
        let cycle = sealed.cycle_index;
        let period = self.current_mut();
        let period_index = period.index;
        let mut added = 0u64;
        let hash_ops;
        let root;
        let n_total;
        match &mut period.store {
            TrieStore::Cumulative(trie) => {
                let before = trie.hash_ops();
                trie.set_epoch(cycle)?;
                for kv in &sealed.pairs {
                    if trie.insert(kv.clone())? == Inserted::New {
                        added += 1;
                    }
                }
                hash_ops = trie.hash_ops() - before;
                root = trie.root();
                n_total = trie.len() as u64;
            }
            TrieStore::PerCycle(tries) => {
                let mut trie = SparseTrie::new();
                for kv in &sealed.pairs {
                    if trie.insert(kv.clone())? == Inserted::New {
                        added += 1;
                    }
                }
                hash_ops = trie.hash_ops();
                root = trie.root();
                n_total = added;
                tries.insert(cycle, trie);
            }
        }
        let elapsed = started.elapsed();

        period
            .records
            .extend(sealed.pairs.iter().map(|kv| LeafRecord {
                cycle,
                key_hex: hex::encode(&kv.key),
                value_hex: hex::encode(&kv.value),
            }));
        let record = CycleRoot {
            cycle_index: cycle,
            period_index,
            root,
            n_in_cycle: added,
            n_total,
            closed_at,
        };
        period.closed.push(record.clone());
        self.archive.push(record.clone());
        self.last_close = Some(CloseStats {
            cycle_index: cycle,
            elapsed,
            hash_ops,
        });

        self.pending.push_back(record.clone());
        self.flush_pending();

        for key in &sealed.prove_on_close {
            let pop = self.assemble(key, 1, cycle)?;
            self.ready.push(pop);
        }
        Ok(record)
    }

    /// Retries buffered publications in cycle order. Returns how many remain.
    pub fn flush_pending(&mut self) -> usize {
        while let Some(front) = self.pending.front() {
            match self.publisher.publish(front) {
                Ok(()) => {
                    self.pending.pop_front();
                }
                Err(e) => {
                    log::warn!(
                        "root for cycle {} not published yet: {e}",
                        front.cycle_index
                    );
                    break;
                }
            }
        }
        self.pending.len()
    }

    /// Persists the period's leaf dump and starts an empty trie.
    pub fn rotate(&mut self) -> Result<PeriodSummary, RelayError> {
        if !self.period_full() {
            return Err(RelayError::InvalidState(format!(
                "period {} has {} of {} cycles closed",
                self.period_index(),
                self.current().closed.len(),
                self.config.cycles_per_period
            )));
        }
        let dump_path = match &self.config.dump_dir {
            Some(dir) => {
                let path: PathBuf = dir.join(format!("period-{:06}.jsonl", self.period_index()));
                write_leaf_dump(&path, &self.current().records)?;
                Some(path)
            }
            None => None,
        };
        let period = self.current();
        let summary = PeriodSummary {
            period_index: period.index,
            roots: period.closed.clone(),
            final_leaf_count: period.records.len() as u64,
            dump_path,
        };
        let next = PeriodState::new(
            period.index + 1,
            period.start_cycle + self.config.cycles_per_period,
            self.config.strategy,
        );
        self.periods.push_back(next);
        while self.periods.len() > self.config.retained_periods {
            self.periods.pop_front();
        }
        Ok(summary)
    }

    fn period_of(&self, cycle: u64) -> Result<&PeriodState, RelayError> {
        self.periods
            .iter()
            .find(|p| p.holds(cycle))
            .ok_or(RelayError::NotRetained { cycle })
    }

    /// Assembles the proof bundle for `key`, spent in `current_cycle`,
    /// whose asset was created in `inception_cycle`. An asset created and
    /// spent in the same cycle has `delta_c` 1, like one created in the
    /// cycle before.
    pub fn retrieve_pop(
        &self,
        key: &[u8],
        inception_cycle: u64,
        current_cycle: u64,
    ) -> Result<ProofOfProvenance, RelayError> {
        if inception_cycle > current_cycle {
            return Err(RelayError::InvalidArgument(format!(
                "inception cycle {inception_cycle} is after current cycle {current_cycle}"
            )));
        }
        self.assemble(key, (current_cycle - inception_cycle).max(1), current_cycle)
    }

    fn assemble(
        &self,
        key: &[u8],
        delta_c: u64,
        current: u64,
    ) -> Result<ProofOfProvenance, RelayError> {
        let period = self.period_of(current)?;
        let first_checked = (current + 1).saturating_sub(delta_c);
        match &period.store {
            TrieStore::Cumulative(trie) => {
                if first_checked < period.start_cycle {
                    return Err(RelayError::PeriodBoundary {
                        period_start: period.start_cycle,
                        first_checked,
                    });
                }
                if trie.inserted_at(key) != Some(current) {
                    return Err(RelayError::NotFound { cycle: current });
                }
                let inclusion = trie.prove_inclusion_at(key, current)?;
                let same_cycle = self.latest_closed() == Some(current);
                let mut exclusions = Vec::new();
                let mut anchor_cycles = vec![current];
                if current > period.start_cycle && !same_cycle {
                    exclusions.push(trie.prove_exclusion_at(key, current - 1)?);
                    anchor_cycles.push(current - 1);
                }
                Ok(ProofOfProvenance {
                    key: key.to_vec(),
                    strategy: Strategy::Novel,
                    inclusion,
                    exclusions,
                    anchor_cycles,
                    delta_c,
                })
            }
            TrieStore::PerCycle(_) => {
                let trie_of = |cycle: u64| -> Result<&SparseTrie, RelayError> {
                    match &self.period_of(cycle)?.store {
                        TrieStore::PerCycle(tries) => {
                            tries.get(&cycle).ok_or(RelayError::NotRetained { cycle })
                        }
                        TrieStore::Cumulative(_) => unreachable!("strategy is fixed per relay"),
                    }
                };
                let inclusion = trie_of(current)?
                    .prove_inclusion(key)
                    .map_err(|e| match e {
                        MerkleError::NotFound => RelayError::NotFound { cycle: current },
                        other => other.into(),
                    })?;
                let mut exclusions = Vec::with_capacity((delta_c - 1) as usize);
                let mut anchor_cycles = vec![current];
                for cycle in first_checked..current {
                    let proof = trie_of(cycle)?.prove_exclusion(key).map_err(|e| match e {
                        MerkleError::KeyPresent => RelayError::DoubleSpend { cycle },
                        other => other.into(),
                    })?;
                    exclusions.push(proof);
                    anchor_cycles.push(cycle);
                }
                Ok(ProofOfProvenance {
                    key: key.to_vec(),
                    strategy: Strategy::Legacy,
                    inclusion,
                    exclusions,
                    anchor_cycles,
                    delta_c,
                })
            }
        }
    }
}
