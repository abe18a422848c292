use std::collections::{BTreeMap, HashMap};
use std::ops::Bound;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::digest::{sha256, Digest};
use super::proof::{ExclusionProof, InclusionProof};
use super::MerkleError;

/// Number of levels between a leaf and the root.
pub const DEPTH: usize = 256;

pub(crate) const LEAF_PREFIX: u8 = 0x00;
pub(crate) const NODE_PREFIX: u8 = 0x01;
pub(crate) const EMPTY_PREFIX: u8 = 0x02;

/// A transaction identifier paired with its payload hash.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KvPair {
    #[serde(with = "hex_bytes")]
    pub key: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub value: Vec<u8>,
}

impl KvPair {
    pub fn new(key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Result<Self, MerkleError> {
        let kv = KvPair {
            key: key.into(),
            value: value.into(),
        };
        kv.validate()?;
        Ok(kv)
    }

    pub fn validate(&self) -> Result<(), MerkleError> {
        if self.key.is_empty() {
            return Err(MerkleError::InvalidArgument("key must be non-empty".into()));
        }
        if self.value.is_empty() {
            return Err(MerkleError::InvalidArgument(
                "value must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of the raw key; the leaf position in the trie.
pub fn key_digest(key: &[u8]) -> Result<Digest, MerkleError> {
    if key.is_empty() {
        return Err(MerkleError::InvalidArgument("key must be non-empty".into()));
    }
    Ok(sha256(&[key]))
}

fn default_table() -> &'static [Digest; DEPTH + 1] {
    static TABLE: OnceLock<[Digest; DEPTH + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [Digest::ZERO; DEPTH + 1];
        table[0] = sha256(&[&[EMPTY_PREFIX]]);
        for level in 1..=DEPTH {
            let below = table[level - 1];
            table[level] = sha256(&[&[NODE_PREFIX], below.as_bytes(), below.as_bytes()]);
        }
        table
    })
}

/// Hash of an empty subtree whose root sits `level` levels above the leaves.
pub fn default_hash(level: usize) -> Result<Digest, MerkleError> {
    if level > DEPTH {
        return Err(MerkleError::InvalidArgument(format!(
            "level {level} outside 0..={DEPTH}"
        )));
    }
    Ok(default_table()[level])
}

#[inline]
pub(crate) fn default_at(level: usize) -> Digest {
    default_table()[level]
}

#[inline]
pub(crate) fn leaf_hash(key: &[u8], value: &[u8]) -> Digest {
    sha256(&[&[LEAF_PREFIX], key, value])
}

#[inline]
pub(crate) fn node_hash(left: &Digest, right: &Digest) -> Digest {
    sha256(&[&[NODE_PREFIX], left.as_bytes(), right.as_bytes()])
}

/// Bit of the hashed key that selects left/right when stepping from `height`
/// to `height + 1`.
#[inline]
pub(crate) fn path_bit(hashed: &Digest, height: usize) -> bool {
    hashed.bit(DEPTH - 1 - height)
}

/// Outcome of [`SparseTrie::insert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inserted {
    New,
    /// The identical pair was already present; nothing changed.
    Unchanged,
}

#[derive(Debug, Clone)]
struct Leaf {
    kv: KvPair,
    epoch: u64,
    /// Hash of the single-leaf subtree containing this leaf at every height.
    /// Entries above the lowest shared ancestor go stale but are never read
    /// for snapshots taken after that ancestor became shared.
    chain: Box<[Digest]>,
}

type NodeId = (u16, Digest);

/// Hash history of a node whose subtree holds at least two leaves.
#[derive(Debug, Clone, Default)]
struct Versions(Vec<(u64, Digest)>);

impl Versions {
    fn record(&mut self, epoch: u64, hash: Digest) {
        match self.0.last_mut() {
            Some((last, h)) if *last == epoch => *h = hash,
            _ => self.0.push((epoch, hash)),
        }
    }

    fn latest(&self) -> Digest {
        self.0.last().map(|(_, h)| *h).unwrap_or(Digest::ZERO)
    }

    fn at(&self, epoch: u64) -> Option<Digest> {
        let idx = self.0.partition_point(|(e, _)| *e <= epoch);
        (idx > 0).then(|| self.0[idx - 1].1)
    }
}

/// Fixed-depth sparse binary Merkle trie keyed by SHA-256 of the key.
///
/// Inserts rehash only the path from the new leaf to the root (`DEPTH + 1`
/// hash evaluations). Interior nodes covering two or more leaves keep their
/// hash per epoch, so proofs can be produced against the root of any earlier
/// epoch as long as the trie has not been discarded. Epochs are advanced by
/// the caller; a trie that never calls [`SparseTrie::set_epoch`] is a plain
/// single-version trie.
#[derive(Debug, Clone, Default)]
pub struct SparseTrie {
    leaves: BTreeMap<Digest, Leaf>,
    shared: HashMap<NodeId, Versions>,
    root_cache: Option<Digest>,
    epoch: u64,
    hash_ops: u64,
    last_insert_hashes: u64,
}

impl SparseTrie {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = &'a KvPair>,
    ) -> Result<Self, MerkleError> {
        let mut trie = Self::new();
        for kv in pairs {
            trie.insert(kv.clone())?;
        }
        Ok(trie)
    }

    pub fn depth(&self) -> usize {
        DEPTH
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Starts a new version. Later inserts are invisible to snapshots taken
    /// at earlier epochs.
    pub fn set_epoch(&mut self, epoch: u64) -> Result<(), MerkleError> {
        if epoch < self.epoch {
            return Err(MerkleError::InvalidArgument(format!(
                "epoch may not move backwards ({} -> {epoch})",
                self.epoch
            )));
        }
        self.epoch = epoch;
        Ok(())
    }

    /// Total hash evaluations performed by inserts over the trie's lifetime.
    pub fn hash_ops(&self) -> u64 {
        self.hash_ops
    }

    /// Hash evaluations performed by the most recent insert.
    pub fn last_insert_hashes(&self) -> u64 {
        self.last_insert_hashes
    }

    pub fn get(&self, key: &[u8]) -> Option<&[u8]> {
        let hashed = key_digest(key).ok()?;
        self.leaves
            .get(&hashed)
            .filter(|leaf| leaf.kv.key == key)
            .map(|leaf| leaf.kv.value.as_slice())
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.get(key).is_some()
    }

    /// Epoch at which `key` was inserted.
    pub fn inserted_at(&self, key: &[u8]) -> Option<u64> {
        let hashed = key_digest(key).ok()?;
        self.leaves
            .get(&hashed)
            .filter(|leaf| leaf.kv.key == key)
            .map(|leaf| leaf.epoch)
    }

    /// Pairs in hashed-key order.
    pub fn pairs(&self) -> impl Iterator<Item = &KvPair> {
        self.leaves.values().map(|leaf| &leaf.kv)
    }

    pub fn insert(&mut self, kv: KvPair) -> Result<Inserted, MerkleError> {
        kv.validate()?;
        let hashed = key_digest(&kv.key)?;
        if let Some(existing) = self.leaves.get(&hashed) {
            return if existing.kv == kv {
                self.last_insert_hashes = 0;
                Ok(Inserted::Unchanged)
            } else {
                Err(MerkleError::DuplicateKey {
                    key_hex: hex::encode(&kv.key),
                })
            };
        }

        let mut chain = vec![Digest::ZERO; DEPTH + 1].into_boxed_slice();
        let mut current = leaf_hash(&kv.key, &kv.value);
        let mut hashes = 1u64;
        chain[0] = current;
        let mut shared = false;

        for height in 0..DEPTH {
            let (sibling, occupied) = self.sibling_latest(&hashed, height);
            current = if path_bit(&hashed, height) {
                node_hash(&sibling, &current)
            } else {
                node_hash(&current, &sibling)
            };
            hashes += 1;
            shared |= occupied;
            if shared {
                let id = ((height + 1) as u16, hashed.prefix(DEPTH - height - 1));
                self.shared
                    .entry(id)
                    .or_default()
                    .record(self.epoch, current);
            } else {
                chain[height + 1] = current;
            }
        }

        self.leaves.insert(
            hashed,
            Leaf {
                kv,
                epoch: self.epoch,
                chain,
            },
        );
        self.root_cache = Some(current);
        self.hash_ops += hashes;
        self.last_insert_hashes = hashes;
        Ok(Inserted::New)
    }

    /// Current root. Uses the cache maintained by `insert`.
    pub fn root(&self) -> Digest {
        match self.root_cache {
            Some(root) => root,
            None => self.node_at(DEPTH, Digest::ZERO, None).0,
        }
    }

    /// Root as of the end of `epoch`.
    pub fn root_at(&self, epoch: u64) -> Digest {
        self.node_at(DEPTH, Digest::ZERO, Some(epoch)).0
    }

    /// Full recomputation from the stored pairs, ignoring every cached node.
    pub fn recompute_root(&self) -> Digest {
        let pairs: Vec<(Digest, &KvPair)> =
            self.leaves.iter().map(|(h, leaf)| (*h, &leaf.kv)).collect();
        subtree_hash(DEPTH, &pairs)
    }

    pub fn prove_inclusion(&self, key: &[u8]) -> Result<InclusionProof, MerkleError> {
        self.inclusion(key, None)
    }

    pub fn prove_inclusion_at(
        &self,
        key: &[u8],
        epoch: u64,
    ) -> Result<InclusionProof, MerkleError> {
        self.inclusion(key, Some(epoch))
    }

    pub fn prove_exclusion(&self, key: &[u8]) -> Result<ExclusionProof, MerkleError> {
        self.exclusion(key, None)
    }

    pub fn prove_exclusion_at(
        &self,
        key: &[u8],
        epoch: u64,
    ) -> Result<ExclusionProof, MerkleError> {
        self.exclusion(key, Some(epoch))
    }

    fn inclusion(&self, key: &[u8], snapshot: Option<u64>) -> Result<InclusionProof, MerkleError> {
        let hashed = key_digest(key)?;
        let leaf = self
            .leaves
            .get(&hashed)
            .filter(|leaf| leaf.kv.key == key)
            .filter(|leaf| snapshot.is_none_or(|e| leaf.epoch <= e))
            .ok_or(MerkleError::NotFound)?;
        Ok(InclusionProof {
            key: key.to_vec(),
            value: leaf.kv.value.clone(),
            siblings: self.siblings(&hashed, snapshot),
            root: self.snapshot_root(snapshot),
        })
    }

    fn exclusion(&self, key: &[u8], snapshot: Option<u64>) -> Result<ExclusionProof, MerkleError> {
        let hashed = key_digest(key)?;
        if let Some(leaf) = self.leaves.get(&hashed) {
            if snapshot.is_none_or(|e| leaf.epoch <= e) {
                return Err(MerkleError::KeyPresent);
            }
        }
        Ok(ExclusionProof {
            key: key.to_vec(),
            siblings: self.siblings(&hashed, snapshot),
            root: self.snapshot_root(snapshot),
        })
    }

    fn snapshot_root(&self, snapshot: Option<u64>) -> Digest {
        match snapshot {
            None => self.root(),
            Some(e) => self.root_at(e),
        }
    }

    fn siblings(&self, hashed: &Digest, snapshot: Option<u64>) -> Vec<Digest> {
        (0..DEPTH)
            .map(|height| {
                let mut prefix = hashed.prefix(DEPTH - height);
                prefix.flip_bit(DEPTH - 1 - height);
                self.node_at(height, prefix, snapshot).0
            })
            .collect()
    }

    fn sibling_latest(&self, hashed: &Digest, height: usize) -> (Digest, bool) {
        let mut prefix = hashed.prefix(DEPTH - height);
        prefix.flip_bit(DEPTH - 1 - height);
        self.node_at(height, prefix, None)
    }

    /// Hash of the node at `height` whose keys start with `prefix`, and
    /// whether that subtree holds any leaf.
    fn node_at(&self, height: usize, prefix: Digest, snapshot: Option<u64>) -> (Digest, bool) {
        if let Some(versions) = self.shared.get(&(height as u16, prefix)) {
            match snapshot {
                None => return (versions.latest(), true),
                Some(e) => {
                    if let Some(h) = versions.at(e) {
                        return (h, true);
                    }
                }
            }
        }
        // At most one leaf of this subtree is visible in the snapshot.
        let upper = prefix.fill_suffix(DEPTH - height);
        let visible = self
            .leaves
            .range((Bound::Included(prefix), Bound::Included(upper)))
            .map(|(_, leaf)| leaf)
            .find(|leaf| snapshot.is_none_or(|e| leaf.epoch <= e));
        match visible {
            Some(leaf) => (leaf.chain[height], true),
            None => (default_at(height), false),
        }
    }
}

fn subtree_hash(height: usize, pairs: &[(Digest, &KvPair)]) -> Digest {
    if pairs.is_empty() {
        return default_at(height);
    }
    if height == 0 {
        let kv = pairs[0].1;
        return leaf_hash(&kv.key, &kv.value);
    }
    let bit = DEPTH - height;
    let split = pairs.partition_point(|(h, _)| !h.bit(bit));
    let left = subtree_hash(height - 1, &pairs[..split]);
    let right = subtree_hash(height - 1, &pairs[split..]);
    node_hash(&left, &right)
}
