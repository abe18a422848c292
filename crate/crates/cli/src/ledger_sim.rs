use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use provenance_core::ledger::{
    consensus_sweep, load_block_file, verify_chain, Cluster, CrashWindow, PartitionWindow,
    SafetyReport, SimConfig, SweepRow,
};
use provenance_core::merkle::{sha256, Digest};

use crate::{sub_seed, usage, write_json, write_manifest, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerSimConfig {
    pub seed: u64,
    pub node_counts: Vec<u32>,
    pub proposals_per_point: usize,
    pub latency_range: (u64, u64),
    pub drop_probability: f64,
    pub election_timeout: (u64, u64),
    pub heartbeat_interval: u64,
    pub propose_timeout_ticks: u64,
    /// Cluster size of the fault run; the largest sweep size when unset.
    pub safety_node_count: Option<u32>,
    pub partitions: Vec<PartitionWindow>,
    pub crashes: Vec<CrashWindow>,
    /// Cut whichever node leads at this tick off from the rest.
    pub isolate_leader_at: Option<u64>,
    pub isolate_for: u64,
}

impl Default for LedgerSimConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        LedgerSimConfig {
            seed: 0,
            node_counts: vec![1, 3, 5, 7],
            proposals_per_point: 50,
            latency_range: sim.latency_range,
            drop_probability: sim.drop_probability,
            election_timeout: sim.election_timeout,
            heartbeat_interval: sim.heartbeat_interval,
            propose_timeout_ticks: 200,
            safety_node_count: None,
            partitions: Vec::new(),
            crashes: Vec::new(),
            isolate_leader_at: None,
            isolate_for: 100,
        }
    }
}

impl LedgerSimConfig {
    fn base(&self, node_count: u32) -> SimConfig {
        SimConfig {
            node_count,
            seed: sub_seed(self.seed, 3),
            latency_range: self.latency_range,
            drop_probability: self.drop_probability,
            election_timeout: self.election_timeout,
            heartbeat_interval: self.heartbeat_interval,
            propose_timeout_ticks: self.propose_timeout_ticks,
            ..SimConfig::default()
        }
    }

    pub fn safety_node_count(&self) -> u32 {
        self.safety_node_count
            .unwrap_or_else(|| self.node_counts.iter().copied().max().unwrap_or(3))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.node_counts.is_empty() {
            return Err(usage("node_counts is empty"));
        }
        for &n in &self.node_counts {
            self.base(n).validate().map_err(usage)?;
        }
        self.fault_config().validate().map_err(usage)?;
        Ok(())
    }

    fn fault_config(&self) -> SimConfig {
        SimConfig {
            partitions: self.partitions.clone(),
            crashes: self.crashes.clone(),
            ..self.base(self.safety_node_count())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRunReport {
    pub node_count: u32,
    pub isolated_leader: Option<u32>,
    pub proposals: usize,
    pub committed: usize,
    pub unavailable: usize,
    pub liveness_after_faults: bool,
    pub durable: bool,
    pub stores_identical: bool,
    pub chains_valid: bool,
    pub safety: SafetyReport,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSimOutcome {
    pub sweep: Vec<SweepRow>,
    pub fault_run: FaultRunReport,
}

fn root_for(i: u64) -> Digest {
    sha256(&[b"ledger-sim", &i.to_be_bytes()])
}

fn fault_run(config: &LedgerSimConfig, out: &Path) -> CliResult<FaultRunReport> {
    let failed = |e: provenance_core::ledger::LedgerError| CliError::Failed(e.to_string());
    let mut sim = config.fault_config();
    let mut isolated_leader = None;
    if let Some(at) = config.isolate_leader_at {
        // Replay the same seed up to `at` to learn who leads then; runs are
        // deterministic, so the real run reaches the same state.
        let mut probe = Cluster::new(sim.clone()).map_err(failed)?;
        probe.run_ticks(at.saturating_sub(1));
        if let Some(leader) = probe.leader() {
            let others = (0..sim.node_count).filter(|&n| n != leader).collect();
            sim.partitions.push(PartitionWindow {
                start_tick: at,
                end_tick: at + config.isolate_for,
                groups: vec![vec![leader], others],
            });
            isolated_leader = Some(leader);
        }
    }
    let fault_end = sim
        .partitions
        .iter()
        .map(|w| w.end_tick)
        .chain(sim.crashes.iter().map(|c| c.end_tick))
        .max()
        .unwrap_or(0);
    sim.store_dir = Some(out.join("blocks"));
    let node_count = sim.node_count;
    let mut cluster = Cluster::new(sim).map_err(failed)?;
    if let Some(at) = config.isolate_leader_at {
        cluster.run_ticks(at.saturating_sub(1));
    }

    let mut committed = Vec::new();
    let mut unavailable = 0;
    for i in 0..config.proposals_per_point as u64 {
        match cluster.propose_root(i, root_for(i)) {
            Ok(_) => committed.push(root_for(i)),
            Err(_) => unavailable += 1,
        }
    }
    while cluster.now() < fault_end {
        cluster.tick();
    }
    // One more root once every fault window has closed.
    let last = config.proposals_per_point as u64;
    let liveness_after_faults = match cluster.propose_root(last, root_for(last)) {
        Ok(_) => {
            committed.push(root_for(last));
            true
        }
        Err(_) => false,
    };
    cluster.settle(10 * config.propose_timeout_ticks);

    let mut files = Vec::new();
    let mut chains_valid = true;
    let mut durable = true;
    for id in 0..node_count {
        let path = out.join("blocks").join(format!("node-{id}.jsonl"));
        let blocks = load_block_file(&path)?;
        chains_valid &= verify_chain(&blocks);
        durable &= committed
            .iter()
            .all(|r| blocks.iter().any(|b| b.merkle_root == *r));
        files.push(fs::read(&path)?);
    }
    let stores_identical = files.windows(2).all(|w| w[0] == w[1]);
    let safety = cluster.safety_report();
    let pass =
        safety.is_safe() && liveness_after_faults && durable && stores_identical && chains_valid;
    Ok(FaultRunReport {
        node_count,
        isolated_leader,
        proposals: config.proposals_per_point + 1,
        committed: committed.len(),
        unavailable,
        liveness_after_faults,
        durable,
        stores_identical,
        chains_valid,
        safety,
        pass,
    })
}

/// Commit-latency sweep over cluster sizes plus one fault run with the
/// configured partitions, crashes and leader isolation.
pub fn run(config: &LedgerSimConfig, out: &Path) -> CliResult<LedgerSimOutcome> {
    config.validate()?;
    fs::create_dir_all(out.join("blocks"))?;
    write_manifest(out, "ledger-sim", config.seed, config)?;

    let sweep = consensus_sweep(
        &config.node_counts,
        &config.base(1),
        config.proposals_per_point,
    )
    .map_err(|e| CliError::Failed(e.to_string()))?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv")).map_err(std::io::Error::other)?;
    for row in &sweep {
        w.serialize(row).map_err(std::io::Error::other)?;
    }
    w.flush()?;

    let fault_run = fault_run(config, out)?;
    write_json(&out.join("safety_report.json"), &fault_run)?;
    Ok(LedgerSimOutcome { sweep, fault_run })
}
