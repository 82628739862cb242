//! SHA-256 hashing and the signature abstraction.
//!
//! Two schemes are provided. [`SigScheme::Ed25519`] is a real signature
//! scheme. [`SigScheme::KeyedHash`] is a deterministic stand-in for
//! simulation: the signature is `SHA-256(tag || key || message)` where the
//! key is the public key itself, so it binds message and key but offers no
//! unforgeability. Verification is always scheme-bound: a signature of the
//! wrong kind never verifies.

use ed25519_dalek::{Signer, Verifier};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::types::{NodeId, U256};

const KEYED_HASH_PK_TAG: &[u8] = b"cbchain/keyed-hash/pk";
const KEYED_HASH_SIG_TAG: &[u8] = b"cbchain/keyed-hash/sig";

/// SHA-256 of `data`, read as a big-endian 256-bit integer.
pub fn hash256(data: &[u8]) -> U256 {
    U256::from_be_bytes(Sha256::digest(data).into())
}

pub(crate) fn hash256_parts(parts: &[&[u8]]) -> U256 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    U256::from_be_bytes(h.finalize().into())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigScheme {
    #[default]
    Ed25519,
    KeyedHash,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Signature {
    /// Carried only by coinbase transactions.
    Empty,
    KeyedHash([u8; 32]),
    Ed25519([u8; 64]),
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Signature::Empty => s.serialize_str(""),
            Signature::KeyedHash(b) => s.serialize_str(&hex::encode(b)),
            Signature::Ed25519(b) => s.serialize_str(&hex::encode(b)),
        }
    }
}

impl SigScheme {
    /// Returns false for malformed keys or signatures; never panics.
    pub fn verify(&self, signer: &NodeId, message: &[u8], signature: &Signature) -> bool {
        match (self, signature) {
            (SigScheme::KeyedHash, Signature::KeyedHash(sig)) => {
                keyed_hash_sign(signer.public_key(), message).to_be_bytes() == *sig
            }
            (SigScheme::Ed25519, Signature::Ed25519(sig)) => {
                let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(signer.public_key()) else {
                    return false;
                };
                vk.verify(message, &ed25519_dalek::Signature::from_bytes(sig))
                    .is_ok()
            }
            _ => false,
        }
    }
}

fn keyed_hash_sign(key: &[u8; 32], message: &[u8]) -> U256 {
    hash256_parts(&[KEYED_HASH_SIG_TAG, key, message])
}

#[derive(Clone)]
enum SecretKey {
    KeyedHash([u8; 32]),
    Ed25519(Box<ed25519_dalek::SigningKey>),
}

/// A node's signing key together with its public identity.
#[derive(Clone)]
pub struct Keypair {
    secret: SecretKey,
    node_id: NodeId,
}

impl Keypair {
    pub fn from_seed(scheme: SigScheme, seed: [u8; 32]) -> Self {
        match scheme {
            SigScheme::KeyedHash => {
                let pk = hash256_parts(&[KEYED_HASH_PK_TAG, &seed]).to_be_bytes();
                Keypair {
                    secret: SecretKey::KeyedHash(pk),
                    node_id: NodeId::from_public_key(pk),
                }
            }
            SigScheme::Ed25519 => {
                let sk = ed25519_dalek::SigningKey::from_bytes(&seed);
                let pk = sk.verifying_key().to_bytes();
                Keypair {
                    secret: SecretKey::Ed25519(Box::new(sk)),
                    node_id: NodeId::from_public_key(pk),
                }
            }
        }
    }

    pub fn scheme(&self) -> SigScheme {
        match self.secret {
            SecretKey::KeyedHash(_) => SigScheme::KeyedHash,
            SecretKey::Ed25519(_) => SigScheme::Ed25519,
        }
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        match &self.secret {
            SecretKey::KeyedHash(key) => {
                Signature::KeyedHash(keyed_hash_sign(key, message).to_be_bytes())
            }
            SecretKey::Ed25519(sk) => Signature::Ed25519(sk.sign(message).to_bytes()),
        }
    }
}

impl std::fmt::Debug for Keypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keypair")
            .field("scheme", &self.scheme())
            .field("node_id", &self.node_id)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Standard SHA-256 test vectors.
    #[test]
    fn sha256_vectors() {
        assert_eq!(
            hash256(b"").to_hex(),
            "0xe3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash256(b"abc").to_hex(),
            "0xba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(hash256(b"abc"), hash256(b"abc"));
    }

    #[test]
    fn hash_parts_matches_concatenation() {
        assert_eq!(hash256_parts(&[b"ab", b"c"]), hash256(b"abc"));
    }

    fn schemes() -> [SigScheme; 2] {
        [SigScheme::Ed25519, SigScheme::KeyedHash]
    }

    #[test]
    fn sign_then_verify() {
        for scheme in schemes() {
            let kp = Keypair::from_seed(scheme, [3; 32]);
            let sig = kp.sign(b"block");
            assert!(scheme.verify(&kp.node_id(), b"block", &sig), "{scheme:?}");
        }
    }

    #[test]
    fn flipped_message_bit_fails() {
        for scheme in schemes() {
            let kp = Keypair::from_seed(scheme, [3; 32]);
            let sig = kp.sign(b"block");
            assert!(!scheme.verify(&kp.node_id(), b"blocj", &sig), "{scheme:?}");
        }
    }

    #[test]
    fn other_key_fails() {
        for scheme in schemes() {
            let kp = Keypair::from_seed(scheme, [3; 32]);
            let other = Keypair::from_seed(scheme, [4; 32]);
            let sig = kp.sign(b"block");
            assert!(
                !scheme.verify(&other.node_id(), b"block", &sig),
                "{scheme:?}"
            );
        }
    }

    #[test]
    fn malformed_or_mismatched_signatures_fail() {
        let kp = Keypair::from_seed(SigScheme::Ed25519, [3; 32]);
        let msg = b"block";
        assert!(!SigScheme::Ed25519.verify(&kp.node_id(), msg, &Signature::Empty));
        assert!(!SigScheme::Ed25519.verify(&kp.node_id(), msg, &Signature::Ed25519([0xff; 64])));
        // A keyed-hash signature must not satisfy an Ed25519 verifier.
        let stub = Keypair::from_seed(SigScheme::KeyedHash, [3; 32]);
        let forged = stub.sign(msg);
        assert!(!SigScheme::Ed25519.verify(&stub.node_id(), msg, &forged));
        // Not a valid curve point: verification returns false instead of erroring.
        let bogus = NodeId::from_public_key([0xff; 32]);
        assert!(!SigScheme::Ed25519.verify(&bogus, msg, &kp.sign(msg)));
    }
}
