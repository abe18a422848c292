use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::merkle::Digest;

use super::block::Block;

/// Append-only block store, optionally mirrored to a JSON-lines file.
#[derive(Debug)]
pub struct BlockStore {
    blocks: Vec<Block>,
    by_root: HashMap<Digest, u64>,
    file: Option<(PathBuf, File)>,
    failing_writes: u32,
}

/// Answer to a root lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub found: bool,
    pub block_index: Option<u64>,
}

impl BlockStore {
    /// In-memory store holding only genesis.
    pub fn in_memory() -> Self {
        BlockStore {
            blocks: vec![Block::genesis()],
            by_root: HashMap::new(),
            file: None,
            failing_writes: 0,
        }
    }

    /// In-memory store over blocks read back from a file, for queries.
    /// The chain is not checked; see [`verify_chain`](super::verify_chain).
    pub fn from_blocks(mut blocks: Vec<Block>) -> Self {
        if blocks.is_empty() {
            blocks.push(Block::genesis());
        }
        let mut by_root = HashMap::new();
        for b in blocks.iter().skip(1) {
            by_root.entry(b.merkle_root).or_insert(b.index);
        }
        BlockStore {
            blocks,
            by_root,
            file: None,
            failing_writes: 0,
        }
    }

    /// Creates (truncating) `path` and writes genesis to it.
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)?;
        let mut store = BlockStore {
            blocks: Vec::new(),
            by_root: HashMap::new(),
            file: Some((path, file)),
            failing_writes: 0,
        };
        store.write_line(&Block::genesis())?;
        store.blocks.push(Block::genesis());
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn last(&self) -> &Block {
        self.blocks.last().expect("store always holds genesis")
    }

    /// Blocks after genesis.
    pub fn root_count(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    /// Makes the next `n` appends fail with an I/O error.
    pub fn fail_next_writes(&mut self, n: u32) {
        self.failing_writes = n;
    }

    pub fn append(&mut self, block: Block) -> io::Result<()> {
        if self.failing_writes > 0 {
            self.failing_writes -= 1;
            return Err(io::Error::other("injected write failure"));
        }
        self.write_line(&block)?;
        self.by_root.entry(block.merkle_root).or_insert(block.index);
        self.blocks.push(block);
        Ok(())
    }

    fn write_line(&mut self, block: &Block) -> io::Result<()> {
        if let Some((_, file)) = &mut self.file {
            let mut line = serde_json::to_vec(block)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        Ok(())
    }

    /// First block holding `root`.
    pub fn query_root(&self, root: &Digest) -> QueryResult {
        let block_index = self.by_root.get(root).copied();
        QueryResult {
            found: block_index.is_some(),
            block_index,
        }
    }
}

pub fn load_block_file(path: impl AsRef<Path>) -> io::Result<Vec<Block>> {
    let reader = BufReader::new(File::open(path)?);
    let mut blocks = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        blocks.push(serde_json::from_str(&line)?);
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::verify_chain;

    #[test]
    fn file_roundtrip_and_query() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("node-0.jsonl");
        let mut store = BlockStore::create(&path).unwrap();
        let root = Digest([7; 32]);
        let b = Block::next(store.last(), 3, root);
        store.append(b).unwrap();
        let loaded = load_block_file(&path).unwrap();
        assert_eq!(loaded, store.blocks());
        assert!(verify_chain(&loaded));
        assert_eq!(
            store.query_root(&root),
            QueryResult {
                found: true,
                block_index: Some(1)
            }
        );
        assert!(!store.query_root(&Digest([8; 32])).found);

        let text = std::fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["index"], 0);
        assert_eq!(first["prev_hash"], "0".repeat(64));
    }

    #[test]
    fn injected_failure_leaves_store_unchanged() {
        let mut store = BlockStore::in_memory();
        store.fail_next_writes(1);
        let b = Block::next(store.last(), 1, Digest([1; 32]));
        assert!(store.append(b.clone()).is_err());
        assert_eq!(store.root_count(), 0);
        store.append(b).unwrap();
        assert_eq!(store.root_count(), 1);
    }
}
