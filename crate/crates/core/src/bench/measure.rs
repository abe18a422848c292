use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::merkle::KvPair;
use crate::relay::{
    hash_cost_of_pop, verify_pop, NullPublisher, Relay, RelayConfig, RelayError, Strategy,
};

use super::{BenchError, BenchSample, SampleKind};

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Submits one cycle's pairs and closes it, rotating when the period fills.
fn ingest_cycle(
    relay: &mut Relay,
    pairs: &[KvPair],
) -> Result<crate::relay::CycleRoot, RelayError> {
    for kv in pairs {
        relay.submit(kv.clone())?;
    }
    let root = relay.close_cycle()?;
    if (root.cycle_index + 1) % relay.config().cycles_per_period == 0 {
        relay.rotate_period()?;
    }
    Ok(root)
}

/// Time to submit and build each cycle. `x` is the period's total pair
/// count under the cumulative strategy and the cycle's own count otherwise.
pub fn measure_rctp(
    config: &RelayConfig,
    workload: &[Vec<KvPair>],
) -> Result<Vec<BenchSample>, BenchError> {
    let mut relay = Relay::new(config.clone(), NullPublisher)?;
    let mut samples = Vec::with_capacity(workload.len());
    for pairs in workload {
        let start = Instant::now();
        let root = ingest_cycle(&mut relay, pairs)?;
        let y_ms = ms_since(start);
        let hash_ops = relay.last_close().map_or(0, |s| s.hash_ops);
        let x = match config.strategy {
            Strategy::Novel => root.n_total,
            Strategy::Legacy => root.n_in_cycle,
        };
        samples.push(BenchSample {
            cycle: root.cycle_index,
            x: x as f64,
            y_ms,
            kind: SampleKind::Rctp,
            hash_ops,
        });
    }
    Ok(samples)
}

/// Which proofs to request once cycles are built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "kebab-case")]
pub enum RetrievalPlan {
    /// After each cycle closes, request a bundle for every pair it holds.
    /// One sample per cycle: the average time per pair against the total
    /// pair count.
    SameCycle,
    /// After all cycles are built, request bundles for pairs of the last
    /// cycle with each listed cycle difference. One sample per request
    /// against the cycle difference.
    DeltaGrid {
        delta_cs: Vec<u64>,
        probes_per_delta: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedRetrieval {
    pub key_hex: String,
    pub inception_cycle: u64,
    pub current_cycle: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RprRun {
    pub samples: Vec<BenchSample>,
    /// Verification time of each bundle in `DeltaGrid` plans.
    pub verify_samples: Vec<BenchSample>,
    pub failures: Vec<FailedRetrieval>,
}

pub fn measure_rpr(
    config: &RelayConfig,
    workload: &[Vec<KvPair>],
    plan: &RetrievalPlan,
) -> Result<RprRun, BenchError> {
    let mut relay = Relay::new(config.clone(), NullPublisher)?;
    let mut run = RprRun::default();
    match plan {
        RetrievalPlan::SameCycle => {
            for pairs in workload {
                let root = ingest_cycle(&mut relay, pairs)?;
                let cycle = root.cycle_index;
                let mut ok = 0u64;
                let mut hash_ops = 0u64;
                let start = Instant::now();
                for kv in pairs {
                    match relay.retrieve_pop(&kv.key, cycle, cycle) {
                        Ok(pop) => {
                            ok += 1;
                            hash_ops += hash_cost_of_pop(&pop);
                        }
                        Err(e) => run.failures.push(failure(&kv.key, cycle, cycle, e)),
                    }
                }
                let total = ms_since(start);
                if ok > 0 {
                    run.samples.push(BenchSample {
                        cycle,
                        x: root.n_total as f64,
                        y_ms: total / ok as f64,
                        kind: SampleKind::Rpr,
                        hash_ops: hash_ops / ok,
                    });
                }
            }
        }
        RetrievalPlan::DeltaGrid {
            delta_cs,
            probes_per_delta,
        } => {
            for pairs in workload {
                ingest_cycle(&mut relay, pairs)?;
            }
            let Some(last) = workload.iter().rposition(|p| !p.is_empty()) else {
                return Ok(run);
            };
            let current = last as u64;
            let pairs = &workload[last];
            for &delta in delta_cs {
                for probe in 0..*probes_per_delta {
                    let key = &pairs[probe % pairs.len()].key;
                    let Some(inception) = current.checked_sub(delta) else {
                        run.failures.push(FailedRetrieval {
                            key_hex: hex::encode(key),
                            inception_cycle: 0,
                            current_cycle: current,
                            error: format!("cycle difference {delta} reaches before cycle 0"),
                        });
                        continue;
                    };
                    let start = Instant::now();
                    let pop = match relay.retrieve_pop(key, inception, current) {
                        Ok(pop) => pop,
                        Err(e) => {
                            run.failures.push(failure(key, inception, current, e));
                            continue;
                        }
                    };
                    let y_ms = ms_since(start);
                    let start = Instant::now();
                    let verified = verify_pop(&pop, relay.archived_roots());
                    let verify_ms = ms_since(start);
                    if !matches!(verified, Ok(true)) {
                        run.failures.push(FailedRetrieval {
                            key_hex: hex::encode(key),
                            inception_cycle: inception,
                            current_cycle: current,
                            error: format!("bundle did not verify: {verified:?}"),
                        });
                        continue;
                    }
                    let sample = BenchSample {
                        cycle: current,
                        x: pop.delta_c as f64,
                        y_ms,
                        kind: SampleKind::Rpr,
                        hash_ops: hash_cost_of_pop(&pop),
                    };
                    run.samples.push(sample);
                    run.verify_samples.push(BenchSample {
                        y_ms: verify_ms,
                        kind: SampleKind::Verify,
                        ..sample
                    });
                }
            }
        }
    }
    Ok(run)
}

fn failure(key: &[u8], inception: u64, current: u64, e: RelayError) -> FailedRetrieval {
    FailedRetrieval {
        key_hex: hex::encode(key),
        inception_cycle: inception,
        current_cycle: current,
        error: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::generate_workload;

    fn config(strategy: Strategy, m: u64) -> RelayConfig {
        RelayConfig {
            strategy,
            cycles_per_period: m,
            ..RelayConfig::default()
        }
    }

    #[test]
    fn rctp_x_axis_by_strategy() {
        let w = generate_workload(25.0, 1.0, 4, 1).unwrap();
        let novel = measure_rctp(&config(Strategy::Novel, 10), &w).unwrap();
        let xs: Vec<f64> = novel.iter().map(|s| s.x).collect();
        assert_eq!(xs, vec![25.0, 50.0, 75.0, 100.0]);
        let legacy = measure_rctp(&config(Strategy::Legacy, 10), &w).unwrap();
        assert!(legacy.iter().all(|s| s.x == 25.0));
        assert!(measure_rctp(&config(Strategy::Novel, 10), &[])
            .unwrap()
            .is_empty());
        // Every new pair costs one full path rehash.
        assert!(novel.iter().all(|s| s.hash_ops == 25 * 257));
    }

    #[test]
    fn same_cycle_retrievals_are_single_proofs() {
        let w = generate_workload(10.0, 1.0, 3, 2).unwrap();
        let run = measure_rpr(&config(Strategy::Novel, 10), &w, &RetrievalPlan::SameCycle).unwrap();
        assert_eq!(run.samples.len(), 3);
        assert!(run.failures.is_empty());
        assert!(run.samples.iter().all(|s| s.hash_ops == 256));
    }

    #[test]
    fn delta_grid_clusters_and_failures() {
        let w = generate_workload(3.0, 1.0, 12, 3).unwrap();
        let plan = RetrievalPlan::DeltaGrid {
            delta_cs: vec![1, 5, 11, 50],
            probes_per_delta: 2,
        };
        let run = measure_rpr(&config(Strategy::Legacy, 20), &w, &plan).unwrap();
        let mut xs: Vec<f64> = run.samples.iter().map(|s| s.x).collect();
        xs.dedup();
        assert_eq!(xs, vec![1.0, 5.0, 11.0]);
        assert_eq!(run.failures.len(), 2);
        for s in &run.samples {
            assert_eq!(s.hash_ops, 256 * s.x as u64);
        }
        assert_eq!(run.verify_samples.len(), run.samples.len());
    }
}
