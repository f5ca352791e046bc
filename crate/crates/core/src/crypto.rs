//! Cryptographic primitives: 256-bit digests (SHA-256), Ed25519 signatures
//! and a counter-mode symmetric transform built on the same hash.
//!
//! All chain, Merkle and content-address uses share the single 32-byte
//! digest type. Values are immutable and all operations are pure.

use ed25519_dalek::{Signer as _, Verifier as _};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// Length of every digest in the system, in bytes.
pub const DIGEST_LEN: usize = 32;

/// A 256-bit hash value. Equality is byte equality.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    /// The all-zero digest, used as the genesis sentinel for chain links.
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; DIGEST_LEN] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid digest hex"))
    }
}

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(data);
    Digest(h.finalize().into())
}

/// SHA-256 over the concatenation of several slices, without an
/// intermediate allocation.
pub fn hash_concat(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// An Ed25519 public key in wire form.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKeyBytes(pub [u8; 32]);

impl std::fmt::Debug for PublicKeyBytes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKeyBytes({})", hex::encode(self.0))
    }
}

impl Serialize for PublicKeyBytes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for PublicKeyBytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("bad public key length"))?;
        Ok(PublicKeyBytes(arr))
    }
}

/// An Ed25519 signature in wire form.
#[derive(Clone, Copy)]
pub struct SignatureBytes(pub [u8; 64]);

impl PartialEq for SignatureBytes {
    fn eq(&self, other: &Self) -> bool {
        self.0[..] == other.0[..]
    }
}
impl Eq for SignatureBytes {}

impl std::fmt::Debug for SignatureBytes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SignatureBytes({})", hex::encode(self.0))
    }
}

impl Serialize for SignatureBytes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for SignatureBytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 64] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("bad signature length"))?;
        Ok(SignatureBytes(arr))
    }
}

/// A signing identity. Secret material never leaves this struct.
#[derive(Clone)]
pub struct KeyPair {
    signing: ed25519_dalek::SigningKey,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyPair(pub {})", hex::encode(self.public().0))
    }
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> KeyPair {
        KeyPair {
            signing: ed25519_dalek::SigningKey::generate(rng),
        }
    }

    /// Deterministic keypair from a 32-byte seed; used by the simulator so
    /// node identities are reproducible per run seed.
    pub fn from_seed(seed: [u8; 32]) -> KeyPair {
        KeyPair {
            signing: ed25519_dalek::SigningKey::from_bytes(&seed),
        }
    }

    pub fn public(&self) -> PublicKeyBytes {
        PublicKeyBytes(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, msg: &[u8]) -> SignatureBytes {
        SignatureBytes(self.signing.sign(msg).to_bytes())
    }
}

/// Verifies `sig` over `msg` under `pk`. Malformed keys or signatures
/// verify false; there is no distinct error path.
pub fn verify(pk: &PublicKeyBytes, msg: &[u8], sig: &SignatureBytes) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&pk.0) else {
        return false;
    };
    let signature = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify(msg, &signature).is_ok()
}

/// A 256-bit symmetric key driving a counter-mode keystream:
/// `block_i = SHA-256(key || i_be)`, ciphertext = plaintext XOR keystream.
///
/// Encryption and decryption are the same involution.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SymmetricKey(pub [u8; 32]);

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

impl SymmetricKey {
    pub fn from_digest(d: Digest) -> SymmetricKey {
        SymmetricKey(d.0)
    }

    /// Derives a subkey bound to a context label and index. Used to give
    /// each frame payload its own keystream.
    pub fn derive(&self, label: &[u8], index: u64) -> SymmetricKey {
        SymmetricKey(hash_concat(&[&self.0, label, &index.to_be_bytes()]).0)
    }

    fn xor_keystream(&self, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len());
        let mut counter: u64 = 0;
        let mut offset = 0;
        while offset < data.len() {
            let block = hash_concat(&[&self.0, &counter.to_be_bytes()]);
            let take = (data.len() - offset).min(DIGEST_LEN);
            for i in 0..take {
                out.push(data[offset + i] ^ block.0[i]);
            }
            offset += take;
            counter += 1;
        }
        out
    }

    pub fn encrypt(&self, plaintext: &[u8]) -> Vec<u8> {
        self.xor_keystream(plaintext)
    }

    pub fn decrypt(&self, ciphertext: &[u8]) -> Vec<u8> {
        self.xor_keystream(ciphertext)
    }
}
