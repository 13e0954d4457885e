//! Self-contained violation proofs and the blacklist they feed.

use rustc_hash::FxHashMap;
use sha2::{Digest, Sha256};

use crate::descriptor::{chain_relation, ChainRelation, Descriptor, DescriptorError};
use crate::identity::{NodeId, SignatureScheme, NODE_ID_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ViolationKind {
    /// Two descriptors by one creator less than a period apart.
    Frequency,
    /// Two chains of one descriptor that fork.
    Cloning,
}

impl ViolationKind {
    fn tag(self) -> u8 {
        match self {
            ViolationKind::Frequency => 1,
            ViolationKind::Cloning => 2,
        }
    }
}

/// Two signed descriptors that together prove `accused` broke the protocol.
/// Anyone holding the creators' public keys can validate it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViolationProof {
    pub kind: ViolationKind,
    pub accused: NodeId,
    /// Kept in canonical (encoded byte) order.
    pub evidence: [Descriptor; 2],
}

fn canonical(a: Descriptor, b: Descriptor) -> [Descriptor; 2] {
    if a.encode() <= b.encode() {
        [a, b]
    } else {
        [b, a]
    }
}

impl ViolationProof {
    pub fn frequency(a: Descriptor, b: Descriptor) -> Self {
        ViolationProof {
            kind: ViolationKind::Frequency,
            accused: a.creator(),
            evidence: canonical(a, b),
        }
    }

    pub fn cloning(a: Descriptor, b: Descriptor, violator: NodeId) -> Self {
        ViolationProof {
            kind: ViolationKind::Cloning,
            accused: violator,
            evidence: canonical(a, b),
        }
    }

    /// Re-derives the accusation from the evidence alone.
    pub fn validate(&self, scheme: &dyn SignatureScheme, period_ms: u64) -> bool {
        let [a, b] = &self.evidence;
        // An untransferred descriptor carries no signature of its creator.
        if a.transfer_count() == 0 || b.transfer_count() == 0 {
            return false;
        }
        if !a.verify_chain(scheme) || !b.verify_chain(scheme) {
            return false;
        }
        match self.kind {
            ViolationKind::Frequency => {
                a.creator() == b.creator()
                    && a.creator() == self.accused
                    && a.timestamp() != b.timestamp()
                    && a.timestamp().abs_diff(b.timestamp()) < period_ms
            }
            ViolationKind::Cloning => matches!(
                chain_relation(a, b),
                Ok(ChainRelation::Conflict { violator }) if violator == self.accused
            ),
        }
    }

    /// `kind | accused | len(a) | a | len(b) | b`, lengths as big-endian u32.
    pub fn encode(&self) -> Vec<u8> {
        let [a, b] = &self.evidence;
        let (ea, eb) = (a.encode(), b.encode());
        let mut out = Vec::with_capacity(1 + NODE_ID_LEN + 8 + ea.len() + eb.len());
        out.push(self.kind.tag());
        out.extend_from_slice(self.accused.as_bytes());
        for e in [ea, eb] {
            out.extend_from_slice(&(e.len() as u32).to_be_bytes());
            out.extend_from_slice(&e);
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        1 + NODE_ID_LEN + 8 + self.evidence[0].encoded_len() + self.evidence[1].encoded_len()
    }

    pub fn decode(bytes: &[u8], sig_len: usize) -> Result<Self, DescriptorError> {
        let kind = match bytes.first() {
            Some(1) => ViolationKind::Frequency,
            Some(2) => ViolationKind::Cloning,
            Some(_) => return Err(DescriptorError::MalformedBytes("unknown proof kind")),
            None => return Err(DescriptorError::MalformedBytes("empty proof")),
        };
        let mut rest = &bytes[1..];
        if rest.len() < NODE_ID_LEN {
            return Err(DescriptorError::MalformedBytes("truncated accused id"));
        }
        let mut id = [0u8; NODE_ID_LEN];
        id.copy_from_slice(&rest[..NODE_ID_LEN]);
        rest = &rest[NODE_ID_LEN..];
        let mut take = || -> Result<Descriptor, DescriptorError> {
            if rest.len() < 4 {
                return Err(DescriptorError::MalformedBytes("truncated evidence length"));
            }
            let n = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
            rest = &rest[4..];
            if rest.len() < n {
                return Err(DescriptorError::MalformedBytes("truncated evidence"));
            }
            let d = Descriptor::decode_with_signature_len(&rest[..n], sig_len)?;
            rest = &rest[n..];
            Ok(d)
        };
        let a = take()?;
        let b = take()?;
        if !rest.is_empty() {
            return Err(DescriptorError::MalformedBytes("trailing bytes after proof"));
        }
        Ok(ViolationProof {
            kind,
            accused: NodeId(id),
            evidence: canonical(a, b),
        })
    }

    /// Stable identifier, used to deduplicate proofs in flight.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.encode()).into()
    }
}

/// Convicted nodes, each with the proof that convicted it.
#[derive(Default)]
pub struct Blacklist {
    convicted: FxHashMap<NodeId, ViolationProof>,
}

impl Blacklist {
    pub fn contains(&self, id: &NodeId) -> bool {
        self.convicted.contains_key(id)
    }

    /// Returns `false` if the accused was already listed.
    pub fn insert(&mut self, proof: ViolationProof) -> bool {
        if self.convicted.contains_key(&proof.accused) {
            return false;
        }
        self.convicted.insert(proof.accused, proof);
        true
    }

    pub fn proof(&self, id: &NodeId) -> Option<&ViolationProof> {
        self.convicted.get(id)
    }

    pub fn len(&self) -> usize {
        self.convicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.convicted.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.convicted.keys()
    }
}
