//! Cycle and period engine.
//!
//! Transactions are collected into cycles of `cycle_time_ms`. When a cycle
//! closes its pairs go into a trie and the resulting root is published:
//!
//! * [`Strategy::Legacy`] builds a fresh trie per cycle. Proving that an
//!   asset was not spent between its inception and now needs a null proof
//!   against every cycle root in between.
//! * [`Strategy::Novel`] keeps one cumulative trie per period of
//!   `cycles_per_period` cycles. Each root covers everything seen so far in
//!   the period, so a bundle needs at most one null proof.
//!
//! [`Relay`] runs on a logical clock and is fully deterministic;
//! [`LiveRelay`] drives the same collector and builder from wall time.

mod builder;
mod collector;
mod dump;
mod live;
mod pop;
mod protocol;
mod publisher;

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::merkle::{Digest, KvPair, MerkleError};

pub use builder::{Builder, CloseStats};
pub use collector::{Collector, SealedCycle};
pub use dump::{read_leaf_dump, write_leaf_dump, LeafRecord};
pub use live::LiveRelay;
pub use pop::{hash_cost_of_pop, verify_pop, ProofOfProvenance};
pub use protocol::{serve_lines, RelayRequest, RelayResponse, RelayService};
pub use publisher::{MemoryPublisher, NullPublisher, PublishError, RootPublisher};

#[derive(Debug, thiserror::Error)]
pub enum RelayError {
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error("key {key_hex} was already submitted this period with a different value")]
    DuplicateKey { key_hex: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("key not included in cycle {cycle}")]
    NotFound { cycle: u64 },
    #[error("key already spent in cycle {cycle}")]
    DoubleSpend { cycle: u64 },
    #[error("cycle {cycle} is outside the retained history")]
    NotRetained { cycle: u64 },
    #[error("proof range starts at cycle {first_checked}, before period start {period_start}")]
    PeriodBoundary {
        period_start: u64,
        first_checked: u64,
    },
    #[error("no archived root for cycle {cycle}")]
    Unverifiable { cycle: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Fresh trie per cycle.
    Legacy,
    /// One cumulative trie per period.
    Novel,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "legacy" => Ok(Strategy::Legacy),
            "novel" => Ok(Strategy::Novel),
            other => Err(format!(
                "unknown strategy `{other}` (expected legacy or novel)"
            )),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Legacy => "legacy",
            Strategy::Novel => "novel",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayConfig {
    pub cycle_time_ms: u64,
    pub cycles_per_period: u64,
    pub strategy: Strategy,
    /// Periods whose tries stay in memory for proof retrieval.
    pub retained_periods: usize,
    /// Expected arrival rate (tx/s). Workload metadata only.
    #[serde(default)]
    pub lambda_hint: f64,
    /// Where leaf dumps are written at period rotation.
    #[serde(default)]
    pub dump_dir: Option<PathBuf>,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            cycle_time_ms: 1000,
            cycles_per_period: 10,
            strategy: Strategy::Novel,
            retained_periods: 2,
            lambda_hint: 0.0,
            dump_dir: None,
        }
    }
}

impl RelayConfig {
    pub fn validate(&self) -> Result<(), RelayError> {
        if self.cycle_time_ms == 0 {
            return Err(RelayError::InvalidArgument(
                "cycle_time_ms must be > 0".into(),
            ));
        }
        if self.cycles_per_period == 0 {
            return Err(RelayError::InvalidArgument(
                "cycles_per_period must be >= 1".into(),
            ));
        }
        if self.retained_periods == 0 {
            return Err(RelayError::InvalidArgument(
                "retained_periods must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// `T_p = m · T_c`.
    pub fn period_time_ms(&self) -> u64 {
        self.cycles_per_period * self.cycle_time_ms
    }
}

/// Root sealed at the end of one cycle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleRoot {
    pub cycle_index: u64,
    pub period_index: u64,
    pub root: Digest,
    /// Pairs added in this cycle.
    pub n_in_cycle: u64,
    /// Pairs under `root`: the period total so far (novel) or `n_in_cycle` (legacy).
    pub n_total: u64,
    /// Logical time in milliseconds.
    pub closed_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub cycle_index: u64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub period_index: u64,
    pub roots: Vec<CycleRoot>,
    pub final_leaf_count: u64,
    pub dump_path: Option<PathBuf>,
}

/// Trie processing time, proof retrieval time and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    pub r_ctp_ms: f64,
    pub r_pr_ms: f64,
    pub l_ms: f64,
}

impl LatencyParams {
    pub fn new(r_ctp_ms: f64, r_pr_ms: f64) -> Result<Self, RelayError> {
        Ok(LatencyParams {
            r_ctp_ms,
            r_pr_ms,
            l_ms: relay_latency(r_ctp_ms, r_pr_ms)?,
        })
    }
}

/// `L = R_ctp + R_pr`.
pub fn relay_latency(r_ctp_ms: f64, r_pr_ms: f64) -> Result<f64, RelayError> {
    if !(r_ctp_ms >= 0.0 && r_pr_ms >= 0.0) {
        return Err(RelayError::InvalidArgument(format!(
            "latencies must be non-negative, got {r_ctp_ms} and {r_pr_ms}"
        )));
    }
    Ok(r_ctp_ms + r_pr_ms)
}

/// Something that happened while the logical clock advanced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "snake_case")]
pub enum ClockEvent {
    CycleClosed(CycleRoot),
    PeriodRotated(PeriodSummary),
}

/// Deterministic relay driven by an explicit logical clock (milliseconds).
///
/// Cycle `k` spans `[k·T_c, (k+1)·T_c)`. A submission arriving exactly at a
/// boundary belongs to the new cycle.
pub struct Relay {
    collector: Collector,
    builder: Builder,
    now_ms: u64,
}

impl Relay {
    pub fn new(
        config: RelayConfig,
        publisher: impl RootPublisher + Send + 'static,
    ) -> Result<Self, RelayError> {
        let collector = Collector::new(config.cycles_per_period, 0);
        let builder = Builder::new(config, Box::new(publisher))?;
        Ok(Relay {
            collector,
            builder,
            now_ms: 0,
        })
    }

    pub fn config(&self) -> &RelayConfig {
        self.builder.config()
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    /// Cycle that new submissions go into.
    pub fn current_cycle(&self) -> u64 {
        self.collector.open_cycle()
    }

    pub fn period_index(&self) -> u64 {
        self.builder.period_index()
    }

    pub fn submit(&mut self, kv: KvPair) -> Result<Receipt, RelayError> {
        self.collector.submit(kv, false)
    }

    /// Like [`Relay::submit`], and the key's bundle is assembled when its
    /// cycle closes (see [`Relay::take_ready_proofs`]).
    pub fn submit_with_proof(&mut self, kv: KvPair) -> Result<Receipt, RelayError> {
        self.collector.submit(kv, true)
    }

    /// Seals the open cycle and builds it.
    pub fn close_cycle(&mut self) -> Result<CycleRoot, RelayError> {
        if self.builder.period_full() {
            return Err(RelayError::InvalidState(
                "period complete; rotate before closing another cycle".into(),
            ));
        }
        let sealed = self.collector.seal();
        self.builder.close(sealed, self.now_ms)
    }

    pub fn rotate_period(&mut self) -> Result<PeriodSummary, RelayError> {
        self.builder.rotate()
    }

    /// Moves the clock forward, closing every cycle that ends at or before
    /// `t_ms` and rotating periods as they fill.
    pub fn advance_to(&mut self, t_ms: u64) -> Result<Vec<ClockEvent>, RelayError> {
        let mut events = Vec::new();
        let cycle_time = self.config().cycle_time_ms;
        loop {
            let boundary = (self.collector.open_cycle() + 1) * cycle_time;
            if boundary > t_ms {
                break;
            }
            self.now_ms = self.now_ms.max(boundary);
            events.push(ClockEvent::CycleClosed(self.close_cycle()?));
            if self.builder.period_full() {
                events.push(ClockEvent::PeriodRotated(self.rotate_period()?));
            }
        }
        self.now_ms = self.now_ms.max(t_ms);
        Ok(events)
    }

    pub fn retrieve_pop(
        &self,
        key: &[u8],
        inception_cycle: u64,
        current_cycle: u64,
    ) -> Result<ProofOfProvenance, RelayError> {
        self.builder
            .retrieve_pop(key, inception_cycle, current_cycle)
    }

    pub fn take_ready_proofs(&mut self) -> Vec<ProofOfProvenance> {
        self.builder.take_ready_proofs()
    }

    pub fn archived_roots(&self) -> &[CycleRoot] {
        self.builder.archived_roots()
    }

    pub fn roots(&self, period: u64) -> Vec<CycleRoot> {
        self.builder.roots_of_period(period)
    }

    pub fn last_close(&self) -> Option<CloseStats> {
        self.builder.last_close()
    }

    pub fn pending_publications(&self) -> usize {
        self.builder.pending_publications()
    }

    pub fn flush_pending(&mut self) -> usize {
        self.builder.flush_pending()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merkle::{default_hash, verify_proof, Proof, SparseTrie};

    fn kv(k: &str) -> KvPair {
        KvPair::new(k.as_bytes(), format!("value-of-{k}").into_bytes()).unwrap()
    }

    fn relay(strategy: Strategy, m: u64) -> Relay {
        let config = RelayConfig {
            cycle_time_ms: 100,
            cycles_per_period: m,
            strategy,
            ..RelayConfig::default()
        };
        Relay::new(config, NullPublisher).unwrap()
    }

    #[test]
    fn latency_is_sum() {
        assert_eq!(relay_latency(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(relay_latency(10.5, 2.25).unwrap(), 12.75);
        assert!(relay_latency(-1.0, 0.0).is_err());
        assert!(relay_latency(0.0, f64::NAN).is_err());
        assert_eq!(LatencyParams::new(1.0, 2.0).unwrap().l_ms, 3.0);
    }

    #[test]
    fn config_validation() {
        let mut c = RelayConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.period_time_ms(), 10_000);
        c.cycles_per_period = 0;
        assert!(c.validate().is_err());
        c.cycles_per_period = 1;
        c.cycle_time_ms = 0;
        assert!(c.validate().is_err());
        assert_eq!("Novel".parse::<Strategy>().unwrap(), Strategy::Novel);
        assert!("other".parse::<Strategy>().is_err());
    }

    #[test]
    fn empty_legacy_cycle_has_default_root() {
        let mut r = relay(Strategy::Legacy, 4);
        let root = r.close_cycle().unwrap();
        assert_eq!(root.root, default_hash(256).unwrap());
        assert_eq!(root.n_in_cycle, 0);
    }

    #[test]
    fn first_submission_goes_to_current_cycle() {
        let mut r = relay(Strategy::Novel, 4);
        assert_eq!(r.submit(kv("a")).unwrap().cycle_index, 0);
        r.close_cycle().unwrap();
        assert_eq!(r.submit(kv("b")).unwrap().cycle_index, 1);
    }

    #[test]
    fn boundary_submission_lands_in_new_cycle() {
        let mut r = relay(Strategy::Novel, 4);
        r.advance_to(99).unwrap();
        assert_eq!(r.submit(kv("before")).unwrap().cycle_index, 0);
        let events = r.advance_to(100).unwrap();
        assert_eq!(events.len(), 1);
        let receipt = r.submit(kv("at-boundary")).unwrap();
        assert!(receipt.accepted);
        assert_eq!(receipt.cycle_index, 1);
    }

    #[test]
    fn novel_accumulates_and_legacy_does_not() {
        let first: Vec<KvPair> = ["a", "b", "c"].iter().map(|k| kv(k)).collect();
        let second: Vec<KvPair> = ["d", "e"].iter().map(|k| kv(k)).collect();

        let mut novel = relay(Strategy::Novel, 4);
        let mut legacy = relay(Strategy::Legacy, 4);
        for r in [&mut novel, &mut legacy] {
            for p in &first {
                r.submit(p.clone()).unwrap();
            }
            r.close_cycle().unwrap();
            for p in &second {
                r.submit(p.clone()).unwrap();
            }
        }
        let n2 = novel.close_cycle().unwrap();
        assert_eq!(n2.n_total, 5);
        assert_eq!(n2.n_in_cycle, 2);
        let union = SparseTrie::from_pairs(first.iter().chain(&second)).unwrap();
        assert_eq!(n2.root, union.root());

        let l2 = legacy.close_cycle().unwrap();
        assert_eq!(l2.n_total, 2);
        let only_second = SparseTrie::from_pairs(&second).unwrap();
        assert_eq!(l2.root, only_second.root());
        for p in &first {
            let excl = only_second.prove_exclusion(&p.key).unwrap();
            assert!(verify_proof(&l2.root, &Proof::Exclusion(excl)).unwrap());
        }
    }

    #[test]
    fn rotate_requires_full_period() {
        let mut r = relay(Strategy::Novel, 2);
        r.close_cycle().unwrap();
        assert!(matches!(
            r.rotate_period(),
            Err(RelayError::InvalidState(_))
        ));
        r.close_cycle().unwrap();
        assert!(matches!(r.close_cycle(), Err(RelayError::InvalidState(_))));
        let s = r.rotate_period().unwrap();
        assert_eq!(s.period_index, 0);
        assert_eq!(s.roots.len(), 2);
        r.close_cycle().unwrap();
        r.close_cycle().unwrap();
        assert_eq!(r.rotate_period().unwrap().period_index, 1);
        assert_eq!(r.period_index(), 2);
    }

    #[test]
    fn single_cycle_periods() {
        let mut r = relay(Strategy::Novel, 1);
        r.submit(kv("x")).unwrap();
        r.close_cycle().unwrap();
        let s = r.rotate_period().unwrap();
        assert_eq!(s.roots.len(), 1);
        assert_eq!(s.final_leaf_count, 1);
    }

    #[test]
    fn novel_pop_shapes() {
        let mut r = relay(Strategy::Novel, 10);
        for c in 0..4 {
            for i in 0..5 {
                r.submit(kv(&format!("c{c}-{i}"))).unwrap();
            }
            r.close_cycle().unwrap();
        }
        // Retrieval in the cycle that just closed: implicit null proof.
        let same = r.retrieve_pop(b"c3-1", 2, 3).unwrap();
        assert!(same.exclusions.is_empty());
        assert_eq!(same.delta_c, 1);
        assert_eq!(hash_cost_of_pop(&same), 256);
        assert!(verify_pop(&same, r.archived_roots()).unwrap());

        let later = r.retrieve_pop(b"c2-1", 0, 2).unwrap();
        assert_eq!(later.exclusions.len(), 1);
        assert_eq!(later.anchor_cycles, vec![2, 1]);
        assert_eq!(hash_cost_of_pop(&later), 512);
        assert!(verify_pop(&later, r.archived_roots()).unwrap());

        // Period start: nothing earlier in the period to rule out.
        let start = r.retrieve_pop(b"c0-1", 0, 0).unwrap();
        assert!(start.exclusions.is_empty());
        assert_eq!(start.delta_c, 1);
        assert!(verify_pop(&start, r.archived_roots()).unwrap());
        assert!(matches!(
            r.retrieve_pop(b"c0-1", 1, 0),
            Err(RelayError::InvalidArgument(_))
        ));

        assert!(matches!(
            r.retrieve_pop(b"c1-1", 0, 2),
            Err(RelayError::NotFound { cycle: 2 })
        ));
    }

    #[test]
    fn novel_pop_rejects_period_spanning_range() {
        let mut r = relay(Strategy::Novel, 2);
        for c in 0..4u64 {
            r.submit(kv(&format!("k{c}"))).unwrap();
            r.close_cycle().unwrap();
            if c % 2 == 1 {
                r.rotate_period().unwrap();
            }
        }
        // Cycle 3 is in period 1 which starts at cycle 2.
        assert!(r.retrieve_pop(b"k3", 1, 3).is_ok());
        assert!(matches!(
            r.retrieve_pop(b"k3", 0, 3),
            Err(RelayError::PeriodBoundary {
                period_start: 2,
                ..
            })
        ));
    }

    #[test]
    fn legacy_pop_has_delta_minus_one_exclusions() {
        let mut r = relay(Strategy::Legacy, 20);
        for c in 0..16 {
            for i in 0..3 {
                r.submit(kv(&format!("c{c}-{i}"))).unwrap();
            }
            r.close_cycle().unwrap();
        }
        let pop = r.retrieve_pop(b"c15-0", 10, 15).unwrap();
        assert_eq!(pop.delta_c, 5);
        assert_eq!(pop.exclusions.len(), 4);
        assert_eq!(pop.anchor_cycles, vec![15, 11, 12, 13, 14]);
        assert_eq!(hash_cost_of_pop(&pop), 5 * 256);
        assert!(verify_pop(&pop, r.archived_roots()).unwrap());

        let one = r.retrieve_pop(b"c15-0", 14, 15).unwrap();
        assert!(one.exclusions.is_empty());
    }

    #[test]
    fn legacy_detects_double_spend_across_periods() {
        let mut r = relay(Strategy::Legacy, 2);
        r.close_cycle().unwrap();
        r.submit(kv("coin")).unwrap();
        r.close_cycle().unwrap();
        r.rotate_period().unwrap();
        // A new period forgets submitted keys, so the same pair can reappear.
        r.submit(kv("coin")).unwrap();
        r.close_cycle().unwrap();
        assert!(matches!(
            r.retrieve_pop(b"coin", 0, 2),
            Err(RelayError::DoubleSpend { cycle: 1 })
        ));
        assert_eq!(r.retrieve_pop(b"coin", 1, 2).unwrap().delta_c, 1);
    }

    #[test]
    fn prove_on_close_returns_same_cycle_bundles() {
        let mut r = relay(Strategy::Novel, 5);
        r.submit(kv("a")).unwrap();
        r.close_cycle().unwrap();
        r.submit_with_proof(kv("b")).unwrap();
        r.submit(kv("c")).unwrap();
        r.close_cycle().unwrap();
        let ready = r.take_ready_proofs();
        assert_eq!(ready.len(), 1);
        assert_eq!(ready[0].key, b"b");
        assert!(ready[0].exclusions.is_empty());
        assert!(verify_pop(&ready[0], r.archived_roots()).unwrap());
        assert!(r.take_ready_proofs().is_empty());
    }

    #[test]
    fn publisher_outage_buffers_roots() {
        let publisher = MemoryPublisher::new();
        let mut r = Relay::new(
            RelayConfig {
                cycles_per_period: 10,
                ..RelayConfig::default()
            },
            publisher.clone(),
        )
        .unwrap();
        publisher.set_offline(true);
        r.close_cycle().unwrap();
        r.close_cycle().unwrap();
        assert_eq!(r.pending_publications(), 2);
        publisher.set_offline(false);
        r.close_cycle().unwrap();
        assert_eq!(r.pending_publications(), 0);
        let cycles: Vec<u64> = publisher
            .published()
            .iter()
            .map(|c| c.cycle_index)
            .collect();
        assert_eq!(cycles, vec![0, 1, 2]);
    }
}
