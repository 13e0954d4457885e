//! Node identities, signature back-ends and simulated clocks.
//!
//! A node's identifier *is* its public verification key. Two interchangeable
//! signature back-ends sit behind [`SignatureScheme`]:
//!
//! * [`KeyedHashScheme`]: a keyed SHA-256 stand-in with 256-bit signatures.
//!   Verification goes through a keyring owned by the scheme instance, so a
//!   signature made with one key never verifies under another id. This is the
//!   simulator default.
//! * [`Ed25519Scheme`]: real asymmetric signatures, used by correctness tests.
//!   Its signatures are 512 bits wide, so the encoded descriptor sizes differ
//!   from the keyed-hash scheme.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use rand::RngCore;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Width of a node identifier (public key) in bytes.
pub const NODE_ID_LEN: usize = 32;

/// Width of a [`KeyedHashScheme`] signature in bytes.
pub const SIGNATURE_LEN: usize = 32;

/// Largest signature any back-end produces.
pub const MAX_SIGNATURE_LEN: usize = 64;

/// Public key of a node, used as its unique identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub [u8; NODE_ID_LEN]);

impl NodeId {
    pub fn as_bytes(&self) -> &[u8; NODE_ID_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", hex::encode(&self.0[..6]))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(&self.0[..8]))
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; NODE_ID_LEN];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(NodeId(out))
    }
}

/// A signature of back-end dependent width (at most [`MAX_SIGNATURE_LEN`]).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    len: u8,
    bytes: [u8; MAX_SIGNATURE_LEN],
}

impl Signature {
    /// Builds a signature from raw bytes. Fails if `bytes` is longer than any
    /// back-end produces.
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        if bytes.len() > MAX_SIGNATURE_LEN {
            return None;
        }
        let mut buf = [0u8; MAX_SIGNATURE_LEN];
        buf[..bytes.len()].copy_from_slice(bytes);
        Some(Signature {
            len: bytes.len() as u8,
            bytes: buf,
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.as_bytes()[..self.len().min(6)]))
    }
}

/// A node's key pair. The secret is a 32-byte seed interpreted by the scheme
/// that generated it.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    node_id: NodeId,
    secret: [u8; 32],
}

impl KeyPair {
    pub fn node_id(&self) -> NodeId {
        self.node_id
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("node_id", &self.node_id).finish_non_exhaustive()
    }
}

/// Signature back-end. Implementations are deterministic: the same key and
/// message always produce the same signature.
pub trait SignatureScheme: Send + Sync + fmt::Debug {
    /// Draws a fresh key pair from `rng`.
    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair;

    fn sign(&self, key: &KeyPair, message: &[u8]) -> Signature;

    fn verify(&self, id: &NodeId, message: &[u8], sig: &Signature) -> bool;

    /// Width in bytes of the signatures this scheme produces.
    fn signature_len(&self) -> usize;

    /// Process-unique instance tag, used to key memoised verification results.
    fn instance(&self) -> u64;
}

/// Generates a new identity using the given scheme.
pub fn generate_identity(scheme: &dyn SignatureScheme, rng: &mut dyn RngCore) -> KeyPair {
    scheme.generate(rng)
}

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

fn next_instance() -> u64 {
    NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed)
}

/// Keyed SHA-256 stand-in for a signature scheme.
///
/// `id = SHA-256("id" || secret)`, `sig = SHA-256("sig" || secret || message)`.
/// Only keys generated (or registered) through this instance can be verified.
#[derive(Debug)]
pub struct KeyedHashScheme {
    keyring: RwLock<FxHashMap<NodeId, [u8; 32]>>,
    instance: u64,
}

impl Default for KeyedHashScheme {
    fn default() -> Self {
        Self::new()
    }
}

impl KeyedHashScheme {
    pub fn new() -> Self {
        KeyedHashScheme {
            keyring: RwLock::new(FxHashMap::default()),
            instance: next_instance(),
        }
    }

    fn derive_id(secret: &[u8; 32]) -> NodeId {
        let mut h = Sha256::new();
        h.update(b"id");
        h.update(secret);
        NodeId(h.finalize().into())
    }

    fn mac(secret: &[u8; 32], message: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"sig");
        h.update(secret);
        h.update(message);
        h.finalize().into()
    }
}

impl SignatureScheme for KeyedHashScheme {
    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        let node_id = Self::derive_id(&secret);
        self.keyring
            .write()
            .expect("keyring lock poisoned")
            .insert(node_id, secret);
        KeyPair { node_id, secret }
    }

    fn sign(&self, key: &KeyPair, message: &[u8]) -> Signature {
        Signature::from_slice(&Self::mac(&key.secret, message)).expect("32-byte signature")
    }

    fn verify(&self, id: &NodeId, message: &[u8], sig: &Signature) -> bool {
        if sig.len() != SIGNATURE_LEN {
            return false;
        }
        let ring = self.keyring.read().expect("keyring lock poisoned");
        match ring.get(id) {
            Some(secret) => Self::mac(secret, message) == sig.as_bytes(),
            None => false,
        }
    }

    fn signature_len(&self) -> usize {
        SIGNATURE_LEN
    }

    fn instance(&self) -> u64 {
        self.instance
    }
}

/// Ed25519 signatures; the node id is the 32-byte verifying key.
#[derive(Debug)]
pub struct Ed25519Scheme {
    instance: u64,
}

impl Default for Ed25519Scheme {
    fn default() -> Self {
        Self::new()
    }
}

impl Ed25519Scheme {
    pub fn new() -> Self {
        Ed25519Scheme {
            instance: next_instance(),
        }
    }
}

impl SignatureScheme for Ed25519Scheme {
    fn generate(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        let sk = SigningKey::from_bytes(&secret);
        KeyPair {
            node_id: NodeId(sk.verifying_key().to_bytes()),
            secret,
        }
    }

    fn sign(&self, key: &KeyPair, message: &[u8]) -> Signature {
        let sk = SigningKey::from_bytes(&key.secret);
        Signature::from_slice(&sk.sign(message).to_bytes()).expect("64-byte signature")
    }

    fn verify(&self, id: &NodeId, message: &[u8], sig: &Signature) -> bool {
        let Ok(bytes) = <[u8; 64]>::try_from(sig.as_bytes()) else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_bytes(id.as_bytes()) else {
            return false;
        };
        vk.verify(message, &ed25519_dalek::Signature::from_bytes(&bytes)).is_ok()
    }

    fn signature_len(&self) -> usize {
        64
    }

    fn instance(&self) -> u64 {
        self.instance
    }
}

/// Simulated wall clock of one node: `epoch + cycle * period + skew`.
///
/// The skew is constant per node, so the clock is monotone in the cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clock {
    pub epoch_ms: u64,
    pub period_ms: u64,
    pub skew_ms: i64,
}

/// Start of simulated time. Large enough that bootstrap descriptors, which
/// are back-dated by a few periods, keep positive timestamps.
pub const DEFAULT_EPOCH_MS: u64 = 1_000_000_000_000;

impl Clock {
    pub fn new(period_ms: u64, skew_ms: i64) -> Self {
        Clock {
            epoch_ms: DEFAULT_EPOCH_MS,
            period_ms,
            skew_ms,
        }
    }

    /// Local time at the start of `cycle`.
    pub fn now(&self, cycle: u64) -> u64 {
        self.at(cycle as i64)
    }

    /// Local time at a (possibly negative) cycle offset from the epoch.
    pub fn at(&self, cycle: i64) -> u64 {
        let t = self.epoch_ms as i128 + cycle as i128 * self.period_ms as i128 + self.skew_ms as i128;
        t.max(0) as u64
    }

    /// Draws a skew uniformly from `[-max_skew_ms, max_skew_ms]`.
    pub fn with_random_skew(period_ms: u64, max_skew_ms: u64, rng: &mut dyn RngCore) -> Self {
        use rand::Rng;
        let skew = if max_skew_ms == 0 {
            0
        } else {
            let m = max_skew_ms as i64;
            rng.gen_range(-m..=m)
        };
        Clock::new(period_ms, skew)
    }
}
