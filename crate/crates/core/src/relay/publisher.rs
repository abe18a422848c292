use std::sync::{Arc, Mutex};

use super::CycleRoot;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PublishError {
    #[error("ledger unavailable: {0}")]
    Unavailable(String),
}

/// Destination for closed cycle roots, normally the ledger.
pub trait RootPublisher {
    fn publish(&mut self, root: &CycleRoot) -> Result<(), PublishError>;
}

/// Discards roots. Used by benchmarks that only measure the relay.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullPublisher;

impl RootPublisher for NullPublisher {
    fn publish(&mut self, _root: &CycleRoot) -> Result<(), PublishError> {
        Ok(())
    }
}

/// Records published roots in a shared list; can be switched offline.
#[derive(Debug, Default, Clone)]
pub struct MemoryPublisher {
    inner: Arc<Mutex<MemoryState>>,
}

#[derive(Debug, Default)]
struct MemoryState {
    published: Vec<CycleRoot>,
    offline: bool,
}

impl MemoryPublisher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_offline(&self, offline: bool) {
        self.inner.lock().unwrap().offline = offline;
    }

    pub fn published(&self) -> Vec<CycleRoot> {
        self.inner.lock().unwrap().published.clone()
    }
}

impl RootPublisher for MemoryPublisher {
    fn publish(&mut self, root: &CycleRoot) -> Result<(), PublishError> {
        let mut state = self.inner.lock().unwrap();
        if state.offline {
            return Err(PublishError::Unavailable("offline".into()));
        }
        state.published.push(root.clone());
        Ok(())
    }
}
