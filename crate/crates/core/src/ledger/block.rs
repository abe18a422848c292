use serde::{Deserialize, Serialize};

use crate::merkle::{sha256, Digest};

/// Root-only ledger entry. Carries a single Merkle root and its chain
/// linkage, never transactions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Digest,
    /// Logical tick at which the leader accepted the root.
    pub timestamp: u64,
    pub merkle_root: Digest,
    pub block_id: Digest,
}

impl Block {
    pub fn genesis() -> Self {
        Self::sealed(0, Digest::ZERO, 0, Digest::ZERO)
    }

    /// Block chained onto `prev`.
    pub fn next(prev: &Block, timestamp: u64, merkle_root: Digest) -> Self {
        Self::sealed(prev.index + 1, prev.block_id, timestamp, merkle_root)
    }

    fn sealed(index: u64, prev_hash: Digest, timestamp: u64, merkle_root: Digest) -> Self {
        let block_id = block_id(index, &prev_hash, timestamp, &merkle_root);
        Block {
            index,
            prev_hash,
            timestamp,
            merkle_root,
            block_id,
        }
    }

    /// `index (u64 BE) ‖ prev_hash ‖ timestamp (u64 BE) ‖ merkle_root`.
    pub fn canonical_bytes(&self) -> [u8; 80] {
        canonical_bytes(
            self.index,
            &self.prev_hash,
            self.timestamp,
            &self.merkle_root,
        )
    }

    pub fn id_is_valid(&self) -> bool {
        self.block_id
            == block_id(
                self.index,
                &self.prev_hash,
                self.timestamp,
                &self.merkle_root,
            )
    }
}

fn canonical_bytes(index: u64, prev: &Digest, timestamp: u64, root: &Digest) -> [u8; 80] {
    let mut out = [0u8; 80];
    out[..8].copy_from_slice(&index.to_be_bytes());
    out[8..40].copy_from_slice(prev.as_bytes());
    out[40..48].copy_from_slice(&timestamp.to_be_bytes());
    out[48..].copy_from_slice(root.as_bytes());
    out
}

fn block_id(index: u64, prev: &Digest, timestamp: u64, root: &Digest) -> Digest {
    sha256(&[&canonical_bytes(index, prev, timestamp, root)])
}

/// Index of the first block that breaks the chain, if any.
pub fn first_invalid_block(blocks: &[Block]) -> Option<u64> {
    let Some(genesis) = blocks.first() else {
        return Some(0);
    };
    if genesis.index != 0 || genesis.prev_hash != Digest::ZERO || !genesis.id_is_valid() {
        return Some(0);
    }
    for (pos, pair) in blocks.windows(2).enumerate() {
        let (prev, block) = (&pair[0], &pair[1]);
        let expected = pos as u64 + 1;
        if block.index != expected || block.prev_hash != prev.block_id || !block.id_is_valid() {
            return Some(expected);
        }
    }
    None
}

/// True iff every block links to its predecessor and its id matches its
/// contents, starting from genesis.
pub fn verify_chain(blocks: &[Block]) -> bool {
    first_invalid_block(blocks).is_none()
}
