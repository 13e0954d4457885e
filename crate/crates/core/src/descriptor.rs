//! Node descriptors carrying a signed chain of ownership.
//!
//! # Encoding
//!
//! All integers are big-endian.
//!
//! ```text
//! creator      32 bytes   public key of the creator
//! host          4 bytes   IPv4 address
//! port          2 bytes
//! timestamp     8 bytes   creator wall clock, milliseconds
//! -- repeated once per ownership transfer --
//! new_owner    32 bytes
//! signature    32 bytes   (64 with the Ed25519 back-end)
//! ```
//!
//! A descriptor that changed hands `t` times is `368 + 512·t` bits long with
//! 256-bit signatures.
//!
//! The `i`-th signature is made by the owner before the transfer over
//! `SHA-256(encoding of core and links 0..i || new_owner_i)`, so it commits to
//! the complete prefix of the chain.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::identity::{KeyPair, NodeId, Signature, SignatureScheme, NODE_ID_LEN, SIGNATURE_LEN};

/// Encoded size of the core fields in bytes (368 bits).
pub const CORE_LEN: usize = NODE_ID_LEN + 4 + 2 + 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("{0} is not the current owner of the descriptor")]
    NotOwner(NodeId),
    #[error("descriptors refer to different creation events")]
    KeyMismatch,
    #[error("malformed descriptor bytes: {0}")]
    MalformedBytes(&'static str),
}

/// Simulated network address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Address {
    pub host: u32,
    pub port: u16,
}

impl Address {
    pub fn new(host: u32, port: u16) -> Self {
        Address { host, port }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DescriptorCore {
    pub creator: NodeId,
    pub address: Address,
    pub timestamp: u64,
}

impl DescriptorCore {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.creator.as_bytes());
        out.extend_from_slice(&self.address.host.to_be_bytes());
        out.extend_from_slice(&self.address.port.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
    }
}

/// Identifies one creation event: same creator, same timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DescriptorKey {
    pub creator: NodeId,
    pub timestamp: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OwnershipLink {
    pub new_owner: NodeId,
    pub signature: Signature,
}

/// How two versions of the same descriptor relate, by owner sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainRelation {
    Identical,
    /// The first chain is a strict prefix of the second.
    PrefixOf,
    /// The first chain strictly extends the second.
    Extends,
    /// The chains fork; `violator` is the last common owner, who transferred
    /// the descriptor to two different nodes.
    Conflict { violator: NodeId },
}

struct Inner {
    core: DescriptorCore,
    chain: Vec<OwnershipLink>,
    /// SHA-256 state after absorbing the full encoding.
    state: Sha256,
    /// `(scheme instance, result)` of the first `verify_chain` call.
    verified: OnceLock<(u64, bool)>,
    /// Set by `transfer` from a verified descriptor: the scheme instance it
    /// was verified under and the hash state over every link but the last.
    prefix_verified: Option<(u64, Sha256)>,
}

/// An immutable node descriptor. Cloning is cheap; `transfer` returns a new
/// value and leaves the original untouched.
#[derive(Clone)]
pub struct Descriptor {
    inner: Arc<Inner>,
}

impl Descriptor {
    /// A fresh descriptor owned by its creator.
    pub fn create(creator: &KeyPair, address: Address, timestamp: u64) -> Self {
        Self::from_parts(
            DescriptorCore {
                creator: creator.node_id(),
                address,
                timestamp,
            },
            Vec::new(),
        )
    }

    /// Assembles a descriptor without checking any signature.
    pub fn from_parts(core: DescriptorCore, chain: Vec<OwnershipLink>) -> Self {
        let mut buf = Vec::with_capacity(CORE_LEN);
        core.encode_into(&mut buf);
        let mut state = Sha256::new();
        state.update(&buf);
        for link in &chain {
            state.update(link.new_owner.as_bytes());
            state.update(link.signature.as_bytes());
        }
        Descriptor {
            inner: Arc::new(Inner {
                core,
                chain,
                state,
                verified: OnceLock::new(),
                prefix_verified: None,
            }),
        }
    }

    pub fn core(&self) -> &DescriptorCore {
        &self.inner.core
    }

    pub fn creator(&self) -> NodeId {
        self.inner.core.creator
    }

    pub fn address(&self) -> Address {
        self.inner.core.address
    }

    pub fn timestamp(&self) -> u64 {
        self.inner.core.timestamp
    }

    pub fn key(&self) -> DescriptorKey {
        DescriptorKey {
            creator: self.inner.core.creator,
            timestamp: self.inner.core.timestamp,
        }
    }

    pub fn chain(&self) -> &[OwnershipLink] {
        &self.inner.chain
    }

    /// Number of ownership transfers so far.
    pub fn transfer_count(&self) -> usize {
        self.inner.chain.len()
    }

    pub fn current_owner(&self) -> NodeId {
        self.inner
            .chain
            .last()
            .map(|l| l.new_owner)
            .unwrap_or(self.inner.core.creator)
    }

    /// Creator followed by every subsequent owner.
    pub fn owners(&self) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::once(self.inner.core.creator).chain(self.inner.chain.iter().map(|l| l.new_owner))
    }

    /// Whether `id` appears anywhere in the owner sequence.
    pub fn involves(&self, id: &NodeId) -> bool {
        self.owners().any(|o| o == *id)
    }

    /// Transfers ownership from `from` (who must be the current owner) to `to`.
    pub fn transfer(
        &self,
        from: &KeyPair,
        to: NodeId,
        scheme: &dyn SignatureScheme,
    ) -> Result<Descriptor, DescriptorError> {
        if self.current_owner() != from.node_id() {
            return Err(DescriptorError::NotOwner(from.node_id()));
        }
        let prefix_verified = match self.inner.verified.get() {
            Some(&(tag, true)) => Some((tag, self.inner.state.clone())),
            _ => None,
        };
        let mut state = self.inner.state.clone();
        state.update(to.as_bytes());
        let digest: [u8; 32] = state.clone().finalize().into();
        let signature = scheme.sign(from, &digest);
        state.update(signature.as_bytes());

        let mut chain = Vec::with_capacity(self.inner.chain.len() + 1);
        chain.extend_from_slice(&self.inner.chain);
        chain.push(OwnershipLink { new_owner: to, signature });
        Ok(Descriptor {
            inner: Arc::new(Inner {
                core: self.inner.core,
                chain,
                state,
                verified: OnceLock::new(),
                prefix_verified,
            }),
        })
    }

    /// Checks every link against its predecessor owner, starting from the
    /// creator. The result is memoised per scheme instance.
    pub fn verify_chain(&self, scheme: &dyn SignatureScheme) -> bool {
        let tag = scheme.instance();
        if let Some(&(cached_tag, ok)) = self.inner.verified.get() {
            if cached_tag == tag {
                return ok;
            }
            return self.verify_uncached(scheme);
        }
        let ok = self.verify_uncached(scheme);
        let _ = self.inner.verified.set((tag, ok));
        ok
    }

    fn verify_uncached(&self, scheme: &dyn SignatureScheme) -> bool {
        let chain = &self.inner.chain;
        if let (Some((tag, prefix)), Some(last)) = (&self.inner.prefix_verified, chain.last()) {
            if *tag == scheme.instance() {
                let signer = match chain.len() {
                    1 => self.inner.core.creator,
                    n => chain[n - 2].new_owner,
                };
                let mut state = prefix.clone();
                state.update(last.new_owner.as_bytes());
                let digest: [u8; 32] = state.finalize().into();
                return scheme.verify(&signer, &digest, &last.signature);
            }
        }
        let mut buf = Vec::with_capacity(CORE_LEN);
        self.inner.core.encode_into(&mut buf);
        let mut state = Sha256::new();
        state.update(&buf);
        let mut signer = self.inner.core.creator;
        for link in chain {
            state.update(link.new_owner.as_bytes());
            let digest: [u8; 32] = state.clone().finalize().into();
            if !scheme.verify(&signer, &digest, &link.signature) {
                return false;
            }
            state.update(link.signature.as_bytes());
            signer = link.new_owner;
        }
        true
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.inner.core.encode_into(&mut out);
        for link in &self.inner.chain {
            out.extend_from_slice(link.new_owner.as_bytes());
            out.extend_from_slice(link.signature.as_bytes());
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        CORE_LEN
            + self
                .inner
                .chain
                .iter()
                .map(|l| NODE_ID_LEN + l.signature.len())
                .sum::<usize>()
    }

    pub fn encoded_bits(&self) -> usize {
        self.encoded_len() * 8
    }

    /// Decodes a descriptor with 256-bit signatures.
    pub fn decode(bytes: &[u8]) -> Result<Descriptor, DescriptorError> {
        Self::decode_with_signature_len(bytes, SIGNATURE_LEN)
    }

    pub fn decode_with_signature_len(bytes: &[u8], sig_len: usize) -> Result<Descriptor, DescriptorError> {
        if sig_len == 0 || sig_len > crate::identity::MAX_SIGNATURE_LEN {
            return Err(DescriptorError::MalformedBytes("unsupported signature width"));
        }
        if bytes.len() < CORE_LEN {
            return Err(DescriptorError::MalformedBytes("shorter than the descriptor core"));
        }
        let link_len = NODE_ID_LEN + sig_len;
        if (bytes.len() - CORE_LEN) % link_len != 0 {
            return Err(DescriptorError::MalformedBytes("trailing partial ownership link"));
        }
        let (core_bytes, rest) = bytes.split_at(CORE_LEN);
        let creator = NodeId(core_bytes[..32].try_into().expect("32 bytes"));
        let host = u32::from_be_bytes(core_bytes[32..36].try_into().expect("4 bytes"));
        let port = u16::from_be_bytes(core_bytes[36..38].try_into().expect("2 bytes"));
        let timestamp = u64::from_be_bytes(core_bytes[38..46].try_into().expect("8 bytes"));
        let chain = rest
            .chunks_exact(link_len)
            .map(|c| OwnershipLink {
                new_owner: NodeId(c[..32].try_into().expect("32 bytes")),
                signature: Signature::from_slice(&c[32..]).expect("bounded width"),
            })
            .collect();
        Ok(Descriptor::from_parts(
            DescriptorCore {
                creator,
                address: Address { host, port },
                timestamp,
            },
            chain,
        ))
    }

    /// Hex dump of the encoding, for debugging.
    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }
}

/// Compares the owner sequences of two versions of the same descriptor.
pub fn chain_relation(a: &Descriptor, b: &Descriptor) -> Result<ChainRelation, DescriptorError> {
    if a.key() != b.key() {
        return Err(DescriptorError::KeyMismatch);
    }
    let (la, lb) = (a.transfer_count(), b.transfer_count());
    // Both sequences start with the creator, so they share at least one owner.
    let mut common = 1;
    for (x, y) in a.chain().iter().zip(b.chain()) {
        if x.new_owner != y.new_owner {
            break;
        }
        common += 1;
    }
    let rel = if common == la + 1 && common == lb + 1 {
        ChainRelation::Identical
    } else if common == la + 1 {
        ChainRelation::PrefixOf
    } else if common == lb + 1 {
        ChainRelation::Extends
    } else {
        let violator = if common == 1 {
            a.creator()
        } else {
            a.chain()[common - 2].new_owner
        };
        ChainRelation::Conflict { violator }
    };
    Ok(rel)
}

impl PartialEq for Descriptor {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.core == other.inner.core && self.inner.chain == other.inner.chain)
    }
}

impl Eq for Descriptor {}

impl fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let owners: Vec<String> = self.owners().map(|o| o.to_string()).collect();
        f.debug_struct("Descriptor")
            .field("timestamp", &self.inner.core.timestamp)
            .field("owners", &owners.join("->"))
            .finish()
    }
}
