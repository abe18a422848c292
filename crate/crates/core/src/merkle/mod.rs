//! Sparse binary Merkle trie with inclusion and exclusion proofs.
//!
//! Leaves sit at the 256-bit path given by `SHA-256(key)`, most significant
//! bit first (0 = left). Hashing is domain separated:
//!
//! * leaf: `H(0x00 ‖ key ‖ value)`
//! * interior: `H(0x01 ‖ left ‖ right)`
//! * empty leaf: `H(0x02)`, folded upwards into [`default_hash`].

mod digest;
mod proof;
mod trie;

pub use digest::{sha256, Digest, DigestParseError};
pub use proof::{proof_hash_cost, verify_proof, ExclusionProof, InclusionProof, Proof};
pub use trie::{default_hash, key_digest, Inserted, KvPair, SparseTrie, DEPTH};

pub(crate) use trie::hex_bytes;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MerkleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("key {key_hex} already holds a different value")]
    DuplicateKey { key_hex: String },
    #[error("key not found")]
    NotFound,
    #[error("key is present; exclusion cannot be proven")]
    KeyPresent,
    #[error("malformed proof: expected {expected} siblings, got {got}")]
    MalformedProof { expected: usize, got: usize },
}
