use serde::{Deserialize, Serialize};

use crate::merkle::sha256;

use super::cluster::{Cluster, SimConfig};
use super::LedgerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub node_count: u32,
    pub proposals: usize,
    pub committed: usize,
    pub mean_commit_ticks: f64,
    pub p99_commit_ticks: u64,
    pub election_ticks: u64,
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[u64], p: f64) -> u64 {
    if samples.is_empty() {
        return 0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Commit latency in ticks per cluster size. Every point uses the same
/// network settings from `base`, with only the node count changed.
pub fn consensus_sweep(
    node_counts: &[u32],
    base: &SimConfig,
    proposals_per_point: usize,
) -> Result<Vec<SweepRow>, LedgerError> {
    let mut rows = Vec::with_capacity(node_counts.len());
    for &node_count in node_counts {
        let mut cluster = Cluster::new(SimConfig {
            node_count,
            store_dir: None,
            monitor: false,
            ..base.clone()
        })?;
        cluster.run_until_leader(base.propose_timeout_ticks);
        let election_ticks = cluster.now();
        let mut ticks = Vec::with_capacity(proposals_per_point);
        for i in 0..proposals_per_point {
            let root = sha256(&[
                &u64::from(node_count).to_be_bytes(),
                &(i as u64).to_be_bytes(),
            ]);
            match cluster.propose_root(i as u64, root) {
                Ok(r) => ticks.push(r.ticks),
                Err(e) => log::warn!("{node_count} nodes: proposal {i} failed: {e}"),
            }
        }
        let mean = if ticks.is_empty() {
            f64::NAN
        } else {
            ticks.iter().sum::<u64>() as f64 / ticks.len() as f64
        };
        rows.push(SweepRow {
            node_count,
            proposals: proposals_per_point,
            committed: ticks.len(),
            mean_commit_ticks: mean,
            p99_commit_ticks: percentile(&ticks, 99.0),
            election_ticks,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let s: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&s, 99.0), 99);
        assert_eq!(percentile(&s, 100.0), 100);
        assert_eq!(percentile(&[5], 99.0), 5);
    }

    #[test]
    fn single_node_commits_in_minimal_ticks() {
        let rows = consensus_sweep(&[1], &SimConfig::default(), 5).unwrap();
        assert_eq!(rows[0].committed, 5);
        assert_eq!(rows[0].p99_commit_ticks, 0);
    }

    #[test]
    fn even_counts_rejected() {
        assert!(consensus_sweep(&[2], &SimConfig::default(), 1).is_err());
    }
}
