use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// A 32-byte SHA-256 value. Identity of keys, trie nodes, roots and blocks.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const LEN: usize = 32;
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Lowercase, 64 characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, DigestParseError> {
        if s.len() != 64 {
            return Err(DigestParseError::Length(s.len()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| DigestParseError::Hex)?;
        Ok(Digest(out))
    }

    /// Bit `i` counted from the most significant bit of byte 0.
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.0[i / 8] >> (7 - (i % 8))) & 1 == 1
    }

    #[inline]
    pub(crate) fn flip_bit(&mut self, i: usize) {
        self.0[i / 8] ^= 1 << (7 - (i % 8));
    }

    /// Keeps the first `keep` bits, zeroing the rest.
    pub(crate) fn prefix(&self, keep: usize) -> Digest {
        let mut out = self.0;
        for (byte_idx, byte) in out.iter_mut().enumerate() {
            let start = byte_idx * 8;
            if start >= keep {
                *byte = 0;
            } else if start + 8 > keep {
                let kept = keep - start;
                *byte &= 0xffu8 << (8 - kept);
            }
        }
        Digest(out)
    }

    /// Sets every bit from position `keep` onwards.
    pub(crate) fn fill_suffix(&self, keep: usize) -> Digest {
        let mut out = self.0;
        for (byte_idx, byte) in out.iter_mut().enumerate() {
            let start = byte_idx * 8;
            if start >= keep {
                *byte = 0xff;
            } else if start + 8 > keep {
                let kept = keep - start;
                *byte |= 0xffu8 >> kept;
            }
        }
        Digest(out)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<[u8; 32]> for Digest {
    fn from(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DigestParseError {
    #[error("digest hex must be 64 characters, got {0}")]
    Length(usize),
    #[error("digest is not valid hex")]
    Hex,
}

impl FromStr for Digest {
    type Err = DigestParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest::from_hex(s)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 over the concatenation of `parts`.
pub fn sha256(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_roundtrip_is_lowercase() {
        let d = sha256(&[b"abc"]);
        let h = d.to_hex();
        assert_eq!(h.len(), 64);
        assert_eq!(h, h.to_lowercase());
        assert_eq!(Digest::from_hex(&h).unwrap(), d);
        assert_eq!(Digest::from_hex(&h.to_uppercase()).unwrap(), d);
    }

    #[test]
    fn rejects_bad_hex() {
        assert_eq!(Digest::from_hex("ab"), Err(DigestParseError::Length(2)));
        assert_eq!(
            Digest::from_hex(&"zz".repeat(32)),
            Err(DigestParseError::Hex)
        );
    }

    #[test]
    fn bit_order_is_msb_first() {
        let mut bytes = [0u8; 32];
        bytes[0] = 0b1000_0000;
        bytes[31] = 0b0000_0001;
        let d = Digest(bytes);
        assert!(d.bit(0));
        assert!(!d.bit(1));
        assert!(d.bit(255));
        assert!(!d.bit(254));
    }

    #[test]
    fn prefix_and_suffix_masks() {
        let d = Digest([0xff; 32]);
        let p = d.prefix(12);
        assert_eq!(p.0[0], 0xff);
        assert_eq!(p.0[1], 0xf0);
        assert!(p.0[2..].iter().all(|b| *b == 0));
        let s = Digest::ZERO.fill_suffix(12);
        assert_eq!(s.0[0], 0x00);
        assert_eq!(s.0[1], 0x0f);
        assert!(s.0[2..].iter().all(|b| *b == 0xff));
        assert_eq!(d.prefix(256), d);
        assert_eq!(d.prefix(0), Digest::ZERO);
    }
}
