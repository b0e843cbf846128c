//! Hashing, signing and deterministic randomness.
//!
//! Everything that feeds a hash goes through [`CanonicalWriter`], a
//! length-prefixed, field-name-ordered byte encoding that is identical on
//! every platform. All randomness in a run (key generation, selection
//! tie-breaks) is drawn from a single counter-based stream seeded by the
//! scenario seed; there is no ambient entropy anywhere.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

/// 32-byte SHA-256 digest, hex-rendered everywhere it is displayed.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Hash32> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Hash32(arr))
    }

    /// First 8 hex chars, for compact display.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for Hash32 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash32::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad hex hash"))
    }
}

pub fn sha256(data: &[u8]) -> Hash32 {
    Hash32(Sha256::digest(data).into())
}

// ---------------------------------------------------------------------------
// Canonical encoding
// ---------------------------------------------------------------------------

/// Deterministic byte encoding used for every hash and signature payload.
///
/// Fields are written as `len(name) u16-be || name || len(value) u32-be ||
/// value`. Callers emit fields in lexicographic order of the field name;
/// list elements are written in list order with an index suffix so that
/// element order is part of the encoding.
#[derive(Default)]
pub struct CanonicalWriter {
    buf: Vec<u8>,
}

impl CanonicalWriter {
    pub fn new(domain: &str) -> Self {
        let mut w = CanonicalWriter { buf: Vec::new() };
        w.field_bytes("_domain", domain.as_bytes());
        w
    }

    pub fn field_bytes(&mut self, name: &str, value: &[u8]) -> &mut Self {
        self.buf
            .extend_from_slice(&(name.len() as u16).to_be_bytes());
        self.buf.extend_from_slice(name.as_bytes());
        self.buf
            .extend_from_slice(&(value.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(value);
        self
    }

    pub fn field_str(&mut self, name: &str, value: &str) -> &mut Self {
        self.field_bytes(name, value.as_bytes())
    }

    pub fn field_u64(&mut self, name: &str, value: u64) -> &mut Self {
        self.field_bytes(name, &value.to_be_bytes())
    }

    pub fn field_hash(&mut self, name: &str, value: &Hash32) -> &mut Self {
        self.field_bytes(name, &value.0)
    }

    /// List field: element encoder is called once per element with a name
    /// carrying the element index, which fixes both arity and order.
    pub fn field_list<T>(
        &mut self,
        name: &str,
        items: &[T],
        mut enc: impl FnMut(&mut Self, &str, &T),
    ) -> &mut Self {
        self.field_u64(&format!("{name}.len"), items.len() as u64);
        for (i, item) in items.iter().enumerate() {
            enc(self, &format!("{name}.{i}"), item);
        }
        self
    }

    pub fn finish(&self) -> Hash32 {
        sha256(&self.buf)
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

// ---------------------------------------------------------------------------
// Deterministic counter RNG
// ---------------------------------------------------------------------------

/// Counter-based random stream: draw `i` is `SHA-256(seed || i)`.
///
/// Replay of the same seed and draw order reproduces every key and
/// tie-break bit-for-bit, on any platform.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DetRng {
    seed: u64,
    counter: u64,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_block(&mut self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"peerchain.rng");
        hasher.update(self.seed.to_be_bytes());
        hasher.update(self.counter.to_be_bytes());
        self.counter += 1;
        hasher.finalize().into()
    }

    pub fn next_u64(&mut self) -> u64 {
        let block = self.next_block();
        u64::from_be_bytes(block[..8].try_into().unwrap())
    }

    /// Uniform draw in `[0, bound)` by rejection sampling.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }
}

/// Stateless tie-break value for reviewer selection: independent of pool
/// iteration order, fully determined by `(seed, address)`.
pub fn tie_break(seed: u64, addr: &Address) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"peerchain.tiebreak");
    hasher.update(seed.to_be_bytes());
    hasher.update(addr.0);
    let block: [u8; 32] = hasher.finalize().into();
    u64::from_be_bytes(block[..8].try_into().unwrap())
}

// ---------------------------------------------------------------------------
// Addresses and keys
// ---------------------------------------------------------------------------

/// Account address: SHA-256 of the Ed25519 public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 32]);

impl Address {
    /// Source address of the genesis mint; owns no key.
    pub const MINT: Address = Address([0u8; 32]);

    pub fn from_public_key(public_key: &[u8]) -> Address {
        Address(sha256(public_key).0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Address> {
        Hash32::from_hex(s).map(|h| Address(h.0))
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Address::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad hex address"))
    }
}

/// Ed25519 keypair. The secret seed is held opaquely: it is serialized for
/// state persistence (this is a desk-scale simulation, not a custody
/// wallet) but never printed.
#[derive(Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct KeyPair {
    public_key: [u8; 32],
    secret_seed: [u8; 32],
}

impl KeyPair {
    /// Derive a keypair from the deterministic stream.
    pub fn generate(rng: &mut DetRng) -> KeyPair {
        let seed = rng.next_block();
        let signing = SigningKey::from_bytes(&seed);
        KeyPair {
            public_key: signing.verifying_key().to_bytes(),
            secret_seed: seed,
        }
    }

    pub fn public_key(&self) -> &[u8; 32] {
        &self.public_key
    }

    pub fn address(&self) -> Address {
        Address::from_public_key(&self.public_key)
    }

    /// Ed25519 signing is deterministic: same key and message, same bytes.
    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        let signing = SigningKey::from_bytes(&self.secret_seed);
        signing.sign(message).to_bytes().to_vec()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &hex::encode(self.public_key))
            .field("secret_seed", &"<redacted>")
            .finish()
    }
}

/// Verify an Ed25519 signature. Malformed keys or signatures verify false.
pub fn verify_signature(public_key: &[u8], message: &[u8], sig: &[u8]) -> bool {
    let Ok(key_bytes) = <[u8; 32]>::try_from(public_key) else {
        return false;
    };
    let Ok(vk) = VerifyingKey::from_bytes(&key_bytes) else {
        return false;
    };
    let Ok(sig_bytes) = <[u8; 64]>::try_from(sig) else {
        return false;
    };
    vk.verify(message, &Signature::from_bytes(&sig_bytes)).is_ok()
}
