use std::sync::{Arc, Mutex};

use crate::relay::{CycleRoot, PublishError, RootPublisher};

use super::cluster::{Cluster, CommitResult};

/// Publishes relay roots by proposing them to a simulated cluster.
#[derive(Clone)]
pub struct ClusterPublisher {
    cluster: Arc<Mutex<Cluster>>,
    commits: Arc<Mutex<Vec<(u64, CommitResult)>>>,
}

impl ClusterPublisher {
    pub fn new(cluster: Arc<Mutex<Cluster>>) -> Self {
        ClusterPublisher {
            cluster,
            commits: Arc::default(),
        }
    }

    pub fn cluster(&self) -> Arc<Mutex<Cluster>> {
        Arc::clone(&self.cluster)
    }

    /// `(cycle, commit)` for every root accepted so far, in publish order.
    pub fn commits(&self) -> Vec<(u64, CommitResult)> {
        self.commits.lock().expect("commit log poisoned").clone()
    }
}

impl RootPublisher for ClusterPublisher {
    fn publish(&mut self, root: &CycleRoot) -> Result<(), PublishError> {
        let mut cluster = self.cluster.lock().expect("cluster poisoned");
        match cluster.propose_root(root.cycle_index, root.root) {
            Ok(commit) => {
                self.commits
                    .lock()
                    .expect("commit log poisoned")
                    .push((root.cycle_index, commit));
                Ok(())
            }
            Err(e) => Err(PublishError::Unavailable(e.to_string())),
        }
    }
}
