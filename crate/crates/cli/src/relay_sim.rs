use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use provenance_core::bench::generate_workload;
use provenance_core::ledger::{
    load_block_file, verify_chain, Cluster, ClusterPublisher, SimConfig,
};
use provenance_core::merkle::Digest;
use provenance_core::relay::{
    hash_cost_of_pop, verify_pop, ClockEvent, CycleRoot, ProofOfProvenance, Relay, RelayConfig,
    Strategy,
};

use crate::{sub_seed, usage, write_json, write_manifest, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaySimConfig {
    pub seed: u64,
    pub cycle_time_ms: u64,
    pub cycles_per_period: u64,
    pub strategy: Strategy,
    pub retained_periods: usize,
    /// Arrival rate in transactions per second.
    pub lambda: f64,
    /// Cycles to run; defaults to one period.
    pub cycles: Option<u64>,
    /// Bundles requested per cycle; all of the cycle's keys when unset.
    pub pops_per_cycle: Option<usize>,
    pub node_count: u32,
    pub latency_range: (u64, u64),
    pub drop_probability: f64,
    pub election_timeout: (u64, u64),
    pub heartbeat_interval: u64,
    pub propose_timeout_ticks: u64,
}

impl Default for RelaySimConfig {
    fn default() -> Self {
        let relay = RelayConfig::default();
        let sim = SimConfig::default();
        RelaySimConfig {
            seed: 0,
            cycle_time_ms: relay.cycle_time_ms,
            cycles_per_period: relay.cycles_per_period,
            strategy: relay.strategy,
            retained_periods: relay.retained_periods,
            lambda: 5.0,
            cycles: None,
            pops_per_cycle: None,
            node_count: sim.node_count,
            latency_range: sim.latency_range,
            drop_probability: sim.drop_probability,
            election_timeout: sim.election_timeout,
            heartbeat_interval: sim.heartbeat_interval,
            propose_timeout_ticks: sim.propose_timeout_ticks,
        }
    }
}

impl RelaySimConfig {
    pub fn cycles(&self) -> u64 {
        self.cycles.unwrap_or(self.cycles_per_period)
    }

    fn relay(&self, out: &Path) -> RelayConfig {
        RelayConfig {
            cycle_time_ms: self.cycle_time_ms,
            cycles_per_period: self.cycles_per_period,
            strategy: self.strategy,
            retained_periods: self.retained_periods,
            lambda_hint: self.lambda,
            dump_dir: Some(out.join("dumps")),
        }
    }

    fn sim(&self, out: &Path) -> SimConfig {
        SimConfig {
            node_count: self.node_count,
            seed: sub_seed(self.seed, 2),
            latency_range: self.latency_range,
            drop_probability: self.drop_probability,
            election_timeout: self.election_timeout,
            heartbeat_interval: self.heartbeat_interval,
            propose_timeout_ticks: self.propose_timeout_ticks,
            store_dir: Some(out.join("blocks")),
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.relay(Path::new(".")).validate().map_err(usage)?;
        self.sim(Path::new(".")).validate().map_err(usage)?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(usage(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.cycles() == 0 {
            return Err(usage("cycles must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleRecord {
    pub key: String,
    pub inception_cycle: u64,
    pub current_cycle: u64,
    pub delta_c: u64,
    pub exclusions: usize,
    pub hash_cost: u64,
    pub verified: bool,
    /// Every anchor root is in every node's ledger.
    pub anchored: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopReport {
    pub strategy: Strategy,
    pub requested: usize,
    pub verified: usize,
    pub bundles: Vec<BundleRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: u32,
    pub blocks: u64,
    pub chain_valid: bool,
    pub roots_match: bool,
    pub all_roots_found: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub roots: usize,
    pub pending_publications: usize,
    pub stores_identical: bool,
    pub nodes: Vec<NodeReport>,
    pub safety_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaySimOutcome {
    pub roots: Vec<CycleRoot>,
    pub pop: PopReport,
    pub ledger: LedgerReport,
    pub problems: Vec<String>,
}

impl RelaySimOutcome {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }
}

fn write_roots_csv(path: &Path, roots: &[CycleRoot]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    w.write_record([
        "cycle_index",
        "period_index",
        "root",
        "n_in_cycle",
        "n_total",
        "closed_at",
    ])
    .map_err(std::io::Error::other)?;
    for r in roots {
        w.write_record([
            r.cycle_index.to_string(),
            r.period_index.to_string(),
            r.root.to_hex(),
            r.n_in_cycle.to_string(),
            r.n_total.to_string(),
            r.closed_at.to_string(),
        ])
        .map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the workload through a relay whose roots are committed by a
/// simulated cluster, then checks ledger contents and proof bundles.
pub fn run(config: &RelaySimConfig, out: &Path) -> CliResult<RelaySimOutcome> {
    config.validate()?;
    fs::create_dir_all(out.join("blocks"))?;
    fs::create_dir_all(out.join("dumps"))?;
    write_manifest(out, "relay-sim", config.seed, config)?;

    let cluster = Arc::new(Mutex::new(
        Cluster::new(config.sim(out)).map_err(|e| CliError::Failed(e.to_string()))?,
    ));
    let publisher = ClusterPublisher::new(Arc::clone(&cluster));
    let relay_config = config.relay(out);
    let mut relay = Relay::new(relay_config.clone(), publisher).map_err(usage)?;

    let t_c = config.cycle_time_ms;
    let cycles = config.cycles();
    let workload = generate_workload(
        config.lambda,
        t_c as f64 / 1e3,
        cycles,
        sub_seed(config.seed, 1),
    )
    .map_err(usage)?;

    let mut pops: Vec<(BundleRecord, Option<ProofOfProvenance>)> = Vec::new();
    let mut retrieve = |relay: &Relay, events: Vec<ClockEvent>| {
        for event in events {
            let ClockEvent::CycleClosed(root) = event else {
                continue;
            };
            let cycle = root.cycle_index;
            let inception = cycle - cycle % config.cycles_per_period;
            let pairs = &workload[cycle as usize];
            let take = config
                .pops_per_cycle
                .unwrap_or(pairs.len())
                .min(pairs.len());
            for kv in &pairs[..take] {
                let record = BundleRecord {
                    key: hex::encode(&kv.key),
                    inception_cycle: inception,
                    current_cycle: cycle,
                    delta_c: 0,
                    exclusions: 0,
                    hash_cost: 0,
                    verified: false,
                    anchored: false,
                    error: None,
                };
                match relay.retrieve_pop(&kv.key, inception, cycle) {
                    Ok(pop) => pops.push((record, Some(pop))),
                    Err(e) => pops.push((
                        BundleRecord {
                            error: Some(e.to_string()),
                            ..record
                        },
                        None,
                    )),
                }
            }
        }
    };

    for (k, pairs) in workload.iter().enumerate() {
        let start = k as u64 * t_c;
        for (i, kv) in pairs.iter().enumerate() {
            let at = start + i as u64 * t_c / pairs.len() as u64;
            let events = relay
                .advance_to(at)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            retrieve(&relay, events);
            relay
                .submit(kv.clone())
                .map_err(|e| CliError::Failed(e.to_string()))?;
        }
    }
    let events = relay
        .advance_to(cycles * t_c)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    retrieve(&relay, events);

    for _ in 0..10 {
        if relay.flush_pending() == 0 {
            break;
        }
    }
    let pending = relay.pending_publications();
    let roots = relay.archived_roots().to_vec();
    drop(relay);

    let mut cluster = cluster.lock().expect("cluster lock");
    cluster.settle(10 * config.propose_timeout_ticks);
    let root_digests: Vec<Digest> = roots.iter().map(|r| r.root).collect();

    let mut problems = Vec::new();
    let mut nodes = Vec::new();
    let mut files = Vec::new();
    for node in cluster.nodes() {
        let path = out.join("blocks").join(format!("node-{}.jsonl", node.id()));
        let blocks = load_block_file(&path)?;
        files.push(fs::read(&path)?);
        let ledger_roots: Vec<Digest> = blocks.iter().skip(1).map(|b| b.merkle_root).collect();
        let report = NodeReport {
            node: node.id(),
            blocks: ledger_roots.len() as u64,
            chain_valid: verify_chain(&blocks),
            roots_match: ledger_roots == root_digests,
            all_roots_found: root_digests.iter().all(|r| node.query_root(r).found),
        };
        if !(report.chain_valid && report.roots_match && report.all_roots_found) {
            problems.push(format!(
                "node {}: ledger does not hold the relay's roots in order",
                node.id()
            ));
        }
        nodes.push(report);
    }
    let stores_identical = files.windows(2).all(|w| w[0] == w[1]);
    if !stores_identical {
        problems.push("block stores differ between nodes".into());
    }
    if pending > 0 {
        problems.push(format!("{pending} roots never reached the ledger"));
    }
    let safety = cluster.safety_report();
    problems.extend(safety.violations.iter().cloned());

    let mut bundles = Vec::with_capacity(pops.len());
    let mut pop_lines = String::new();
    for (mut record, pop) in pops {
        if let Some(pop) = pop {
            pop_lines.push_str(&pop.to_json());
            pop_lines.push('\n');
            record.delta_c = pop.delta_c;
            record.exclusions = pop.exclusions.len();
            record.hash_cost = hash_cost_of_pop(&pop);
            match verify_pop(&pop, &roots) {
                Ok(v) => record.verified = v,
                Err(e) => record.error = Some(e.to_string()),
            }
            record.anchored = pop.anchor_cycles.iter().all(|&c| {
                let root = roots[c as usize].root;
                cluster.nodes().iter().all(|n| n.query_root(&root).found)
            });
        }
        if !(record.verified && record.anchored) {
            problems.push(format!(
                "bundle for {} in cycle {} failed: {}",
                record.key,
                record.current_cycle,
                record.error.as_deref().unwrap_or("did not verify")
            ));
        }
        bundles.push(record);
    }
    let pop = PopReport {
        strategy: config.strategy,
        requested: bundles.len(),
        verified: bundles.iter().filter(|b| b.verified && b.anchored).count(),
        bundles,
    };
    let ledger = LedgerReport {
        roots: roots.len(),
        pending_publications: pending,
        stores_identical,
        nodes,
        safety_violations: safety.violations,
    };

    write_roots_csv(&out.join("roots.csv"), &roots)?;
    write_json(&out.join("pop_report.json"), &pop)?;
    fs::write(out.join("pops.jsonl"), pop_lines)?;
    write_json(&out.join("ledger_report.json"), &ledger)?;
    Ok(RelaySimOutcome {
        roots,
        pop,
        ledger,
        problems,
    })
}
