//! Cumulative Merkle-trie relay, root-only Raft ledger and benchmark harness.

pub mod bench;
pub mod ledger;
pub mod merkle;
pub mod relay;
