use serde::{Deserialize, Serialize};

use super::digest::Digest;
use super::trie::{default_at, key_digest, leaf_hash, node_hash, path_bit, DEPTH};
use super::MerkleError;

/// Sibling hashes proving that `key` maps to `value` under `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InclusionProof {
    pub key: Vec<u8>,
    pub value: Vec<u8>,
    /// Ordered leaf to root.
    pub siblings: Vec<Digest>,
    pub root: Digest,
}

/// Sibling hashes proving that no leaf exists for `key` under `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionProof {
    pub key: Vec<u8>,
    /// Ordered leaf to root.
    pub siblings: Vec<Digest>,
    pub root: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ProofJson", into = "ProofJson")]
pub enum Proof {
    Inclusion(InclusionProof),
    Exclusion(ExclusionProof),
}

impl Proof {
    pub fn key(&self) -> &[u8] {
        match self {
            Proof::Inclusion(p) => &p.key,
            Proof::Exclusion(p) => &p.key,
        }
    }

    pub fn root(&self) -> Digest {
        match self {
            Proof::Inclusion(p) => p.root,
            Proof::Exclusion(p) => p.root,
        }
    }

    pub fn siblings(&self) -> &[Digest] {
        match self {
            Proof::Inclusion(p) => &p.siblings,
            Proof::Exclusion(p) => &p.siblings,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("proof serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

impl From<InclusionProof> for Proof {
    fn from(p: InclusionProof) -> Self {
        Proof::Inclusion(p)
    }
}

impl From<ExclusionProof> for Proof {
    fn from(p: ExclusionProof) -> Self {
        Proof::Exclusion(p)
    }
}

impl Serialize for InclusionProof {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ProofJson::from(Proof::Inclusion(self.clone())).serialize(s)
    }
}

impl<'de> Deserialize<'de> for InclusionProof {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Proof::deserialize(d)? {
            Proof::Inclusion(p) => Ok(p),
            Proof::Exclusion(_) => Err(serde::de::Error::custom("expected an inclusion proof")),
        }
    }
}

impl Serialize for ExclusionProof {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ProofJson::from(Proof::Exclusion(self.clone())).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExclusionProof {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Proof::deserialize(d)? {
            Proof::Exclusion(p) => Ok(p),
            Proof::Inclusion(_) => Err(serde::de::Error::custom("expected an exclusion proof")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ProofKind {
    Inclusion,
    Exclusion,
}

/// Wire form: `{"kind","key","value","siblings","root"}`, lowercase hex.
#[derive(Serialize, Deserialize)]
struct ProofJson {
    kind: ProofKind,
    key: String,
    value: Option<String>,
    siblings: Vec<Digest>,
    root: Digest,
}

impl From<Proof> for ProofJson {
    fn from(p: Proof) -> Self {
        match p {
            Proof::Inclusion(p) => ProofJson {
                kind: ProofKind::Inclusion,
                key: hex::encode(&p.key),
                value: Some(hex::encode(&p.value)),
                siblings: p.siblings,
                root: p.root,
            },
            Proof::Exclusion(p) => ProofJson {
                kind: ProofKind::Exclusion,
                key: hex::encode(&p.key),
                value: None,
                siblings: p.siblings,
                root: p.root,
            },
        }
    }
}

impl TryFrom<ProofJson> for Proof {
    type Error = String;

    fn try_from(j: ProofJson) -> Result<Self, Self::Error> {
        let key = hex::decode(&j.key).map_err(|e| format!("key: {e}"))?;
        Ok(match (j.kind, j.value) {
            (ProofKind::Inclusion, Some(v)) => Proof::Inclusion(InclusionProof {
                key,
                value: hex::decode(v).map_err(|e| format!("value: {e}"))?,
                siblings: j.siblings,
                root: j.root,
            }),
            (ProofKind::Inclusion, None) => return Err("inclusion proof needs a value".into()),
            (ProofKind::Exclusion, None) => Proof::Exclusion(ExclusionProof {
                key,
                siblings: j.siblings,
                root: j.root,
            }),
            (ProofKind::Exclusion, Some(_)) => {
                return Err("exclusion proof must have a null value".into())
            }
        })
    }
}

/// Checks a proof against `root` without access to any trie.
///
/// The proof's own `root` field must also equal `root`.
pub fn verify_proof(root: &Digest, proof: &Proof) -> Result<bool, MerkleError> {
    let siblings = proof.siblings();
    if siblings.len() != DEPTH {
        return Err(MerkleError::MalformedProof {
            expected: DEPTH,
            got: siblings.len(),
        });
    }
    let Ok(hashed) = key_digest(proof.key()) else {
        return Ok(false);
    };
    let mut current = match proof {
        Proof::Inclusion(p) => leaf_hash(&p.key, &p.value),
        Proof::Exclusion(_) => default_at(0),
    };
    for (height, sibling) in siblings.iter().enumerate() {
        current = if path_bit(&hashed, height) {
            node_hash(sibling, &current)
        } else {
            node_hash(&current, sibling)
        };
    }
    Ok(current == *root && proof.root() == *root)
}

/// Sibling hash evaluations needed to check one proof.
pub fn proof_hash_cost() -> u64 {
    DEPTH as u64
}
