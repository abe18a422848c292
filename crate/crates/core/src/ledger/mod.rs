//! Root-only replicated ledger.
//!
//! Each committed Raft entry carries one Merkle root and becomes one block
//! in every node's append-only block file. The cluster runs on a seeded,
//! tick-driven network simulation so whole runs can be replayed.

mod block;
mod cluster;
mod protocol;
mod publisher;
mod raft;
mod safety;
mod simnet;
mod store;
mod sweep;

pub use block::{first_invalid_block, verify_chain, Block};
pub use cluster::{Cluster, CommitResult, CrashWindow, SimConfig, TickEvents};
pub use protocol::{handle_query, serve_queries, QueryRequest, QueryResponse};
pub use publisher::ClusterPublisher;
pub use raft::{
    LogEntry, Message, MessageBody, NodeId, ProposeOutcome, RaftConfig, RaftNode, Role, RootPayload,
};
pub use safety::{SafetyMonitor, SafetyReport};
pub use simnet::{DropReason, PartitionWindow, SimNet};
pub use store::{load_block_file, BlockStore, QueryResult};
pub use sweep::{consensus_sweep, percentile, SweepRow};

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no commit within {ticks} ticks")]
    Unavailable { ticks: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
