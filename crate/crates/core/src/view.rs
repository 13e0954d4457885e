//! Cyclon partial views and the legacy (unsecured) gossip exchange.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{Descriptor, DescriptorKey};
use crate::identity::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CyclonError {
    #[error("view is empty")]
    EmptyView,
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
}

/// Static protocol parameters shared by every node of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Network size.
    pub n: usize,
    /// View length.
    pub view_len: usize,
    /// Swap length.
    pub swap_len: usize,
    /// Redemption cache size.
    pub redemption_cache: usize,
    /// Gossip period in milliseconds; one cycle.
    pub period_ms: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            n: 1000,
            view_len: 20,
            swap_len: 3,
            redemption_cache: 5,
            period_ms: 10_000,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), CyclonError> {
        if self.n < 2 {
            return Err(CyclonError::InvalidParams(format!("n = {} < 2", self.n)));
        }
        if self.swap_len < 1 || self.swap_len > self.view_len {
            return Err(CyclonError::InvalidParams(format!(
                "swap length {} outside 1..={}",
                self.swap_len, self.view_len
            )));
        }
        if self.period_ms == 0 {
            return Err(CyclonError::InvalidParams("gossip period must be positive".into()));
        }
        Ok(())
    }
}

/// One slot of a view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewEntry {
    pub descriptor: Descriptor,
    /// Cycles since the descriptor was created; travels with the descriptor.
    pub age: u32,
    /// `false` for retained copies of descriptors whose ownership was given
    /// away. Such entries may only be redeemed.
    pub swappable: bool,
}

impl ViewEntry {
    pub fn new(descriptor: Descriptor, age: u32) -> Self {
        ViewEntry {
            descriptor,
            age,
            swappable: true,
        }
    }

    pub fn non_swappable(descriptor: Descriptor, age: u32) -> Self {
        ViewEntry {
            descriptor,
            age,
            swappable: false,
        }
    }

    pub fn creator(&self) -> NodeId {
        self.descriptor.creator()
    }
}

/// Fixed-capacity partial view owned by one node.
///
/// Never holds two entries with the same [`DescriptorKey`], nor an entry
/// created by the owner.
#[derive(Clone, Debug)]
pub struct View {
    owner: NodeId,
    capacity: usize,
    entries: Vec<ViewEntry>,
}

/// Why [`View::insert`] refused an entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertRefusal {
    Full,
    SelfLink,
    Duplicate,
}

impl View {
    pub fn new(owner: NodeId, capacity: usize) -> Self {
        View {
            owner,
            capacity,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn free_slots(&self) -> usize {
        self.capacity.saturating_sub(self.entries.len())
    }

    pub fn entries(&self) -> &[ViewEntry] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &ViewEntry> {
        self.entries.iter()
    }

    pub fn contains_key(&self, key: &DescriptorKey) -> bool {
        self.entries.iter().any(|e| e.descriptor.key() == *key)
    }

    pub fn insert(&mut self, entry: ViewEntry) -> Result<(), InsertRefusal> {
        if entry.creator() == self.owner {
            return Err(InsertRefusal::SelfLink);
        }
        if self.is_full() {
            return Err(InsertRefusal::Full);
        }
        if self.contains_key(&entry.descriptor.key()) {
            return Err(InsertRefusal::Duplicate);
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Removes and returns the oldest entry; ties go to the smallest creator id.
    pub fn select_partner(&mut self) -> Result<ViewEntry, CyclonError> {
        let idx = self
            .entries
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.age.cmp(&b.age).then_with(|| b.creator().cmp(&a.creator())))
            .map(|(i, _)| i)
            .ok_or(CyclonError::EmptyView)?;
        Ok(self.entries.swap_remove(idx))
    }

    /// Every entry grows one cycle older.
    pub fn age(&mut self) {
        for e in &mut self.entries {
            e.age += 1;
        }
    }

    /// Removes up to `count` random swappable entries not created by `exclude`.
    pub fn take_random<R: Rng + ?Sized>(&mut self, count: usize, exclude: Option<NodeId>, rng: &mut R) -> Vec<ViewEntry> {
        let eligible: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.swappable && Some(e.creator()) != exclude)
            .map(|(i, _)| i)
            .collect();
        let k = count.min(eligible.len());
        if k == 0 {
            return Vec::new();
        }
        let mut picked: Vec<usize> = sample(rng, eligible.len(), k).into_iter().map(|j| eligible[j]).collect();
        // Remove from the back so earlier indices stay valid.
        picked.sort_unstable_by(|a, b| b.cmp(a));
        let mut out: Vec<ViewEntry> = picked.into_iter().map(|i| self.entries.swap_remove(i)).collect();
        out.reverse();
        out
    }

    /// Removes every entry matching `pred`, returning how many were dropped.
    pub fn remove_where(&mut self, mut pred: impl FnMut(&ViewEntry) -> bool) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| !pred(e));
        before - self.entries.len()
    }
}

/// What the initiator ships in a legacy exchange: its fresh descriptor plus
/// `s - 1` entries removed at random from its view.
pub fn initiator_offer<R: Rng + ?Sized>(
    view: &mut View,
    fresh: Descriptor,
    swap_len: usize,
    partner: NodeId,
    rng: &mut R,
) -> Vec<ViewEntry> {
    let mut offer = Vec::with_capacity(swap_len);
    offer.push(ViewEntry::new(fresh, 0));
    offer.extend(view.take_random(swap_len.saturating_sub(1), Some(partner), rng));
    offer
}

/// The responder's answer: `s` entries removed at random from its view.
pub fn responder_reply<R: Rng + ?Sized>(
    view: &mut View,
    swap_len: usize,
    initiator: NodeId,
    rng: &mut R,
) -> Vec<ViewEntry> {
    view.take_random(swap_len, Some(initiator), rng)
}

/// Stores received entries, then refills leftover slots with the entries the
/// node sent away. Returns how many received entries were stored.
pub fn absorb(view: &mut View, received: Vec<ViewEntry>, sent: Vec<ViewEntry>) -> usize {
    let mut stored = 0;
    for e in received {
        if view.insert(e).is_ok() {
            stored += 1;
        }
    }
    for e in sent {
        if view.is_full() {
            break;
        }
        let _ = view.insert(e);
    }
    stored
}

/// Result of one legacy exchange.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegacyOutcome {
    pub sent_by_initiator: usize,
    pub sent_by_partner: usize,
}

/// Runs a complete, fault-free legacy Cyclon exchange. The initiator must
/// already have redeemed the partner's descriptor via [`View::select_partner`].
pub fn legacy_exchange<R: Rng + ?Sized>(
    initiator: &mut View,
    fresh: Descriptor,
    partner: &mut View,
    swap_len: usize,
    rng: &mut R,
) -> LegacyOutcome {
    let offer = initiator_offer(initiator, fresh, swap_len, partner.owner(), rng);
    let reply = responder_reply(partner, swap_len, initiator.owner(), rng);
    let outcome = LegacyOutcome {
        sent_by_initiator: offer.len(),
        sent_by_partner: reply.len(),
    };
    // The fresh descriptor points at the initiator itself, so only the view
    // entries it shipped are candidates for retention.
    let retained = offer[1..].to_vec();
    absorb(partner, offer, reply.clone());
    absorb(initiator, reply, retained);
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::Address;
    use crate::identity::{KeyPair, KeyedHashScheme, SignatureScheme};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn keys(n: usize) -> Vec<KeyPair> {
        let s = KeyedHashScheme::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut k: Vec<KeyPair> = (0..n).map(|_| s.generate(&mut rng)).collect();
        k.sort_by_key(|k| k.node_id());
        k
    }

    fn entry(k: &KeyPair, ts: u64, age: u32) -> ViewEntry {
        ViewEntry::new(Descriptor::create(k, Address::new(0, 0), ts), age)
    }

    #[test]
    fn selects_oldest() {
        let k = keys(4);
        let mut v = View::new(k[0].node_id(), 5);
        v.insert(entry(&k[1], 1, 3)).unwrap();
        v.insert(entry(&k[2], 1, 7)).unwrap();
        v.insert(entry(&k[3], 1, 1)).unwrap();
        let e = v.select_partner().unwrap();
        assert_eq!(e.creator(), k[2].node_id());
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|e| e.creator() != k[2].node_id()));
    }

    #[test]
    fn empty_view_errors() {
        let k = keys(1);
        let mut v = View::new(k[0].node_id(), 5);
        assert_eq!(v.select_partner(), Err(CyclonError::EmptyView));
    }

    #[test]
    fn tie_goes_to_smallest_id() {
        let k = keys(3);
        let mut v = View::new(k[0].node_id(), 5);
        v.insert(entry(&k[2], 1, 4)).unwrap();
        v.insert(entry(&k[1], 1, 4)).unwrap();
        assert!(k[1].node_id() < k[2].node_id());
        assert_eq!(v.select_partner().unwrap().creator(), k[1].node_id());
    }

    #[test]
    fn aging() {
        let k = keys(3);
        let mut v = View::new(k[0].node_id(), 5);
        v.age();
        assert!(v.is_empty());
        v.insert(entry(&k[1], 1, 1)).unwrap();
        v.insert(entry(&k[2], 1, 2)).unwrap();
        v.age();
        let ages: Vec<u32> = v.iter().map(|e| e.age).collect();
        assert_eq!(ages, vec![2, 3]);
        for _ in 0..5 {
            v.age();
        }
        let ages: Vec<u32> = v.iter().map(|e| e.age).collect();
        assert_eq!(ages, vec![7, 8]);
    }

    #[test]
    fn insert_refusals() {
        let k = keys(3);
        let mut v = View::new(k[0].node_id(), 2);
        assert_eq!(v.insert(entry(&k[0], 1, 0)), Err(InsertRefusal::SelfLink));
        v.insert(entry(&k[1], 1, 0)).unwrap();
        assert_eq!(v.insert(entry(&k[1], 1, 5)), Err(InsertRefusal::Duplicate));
        v.insert(entry(&k[1], 2, 0)).unwrap();
        assert_eq!(v.insert(entry(&k[2], 1, 0)), Err(InsertRefusal::Full));
    }

    #[test]
    fn two_node_exchange_flips_link() {
        let k = keys(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = View::new(k[0].node_id(), 1);
        let mut b = View::new(k[1].node_id(), 1);
        a.insert(entry(&k[1], 0, 0)).unwrap();
        let redeemed = a.select_partner().unwrap();
        assert_eq!(redeemed.creator(), b.owner());
        let fresh = Descriptor::create(&k[0], Address::new(0, 0), 10);
        let out = legacy_exchange(&mut a, fresh, &mut b, 1, &mut rng);
        assert_eq!(out.sent_by_initiator, 1);
        assert_eq!(out.sent_by_partner, 0);
        assert!(a.is_empty());
        assert_eq!(b.len(), 1);
        assert_eq!(b.entries()[0].creator(), a.owner());
    }

    #[test]
    fn small_view_sends_only_fresh() {
        let k = keys(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = View::new(k[0].node_id(), 5);
        v.insert(entry(&k[1], 0, 2)).unwrap();
        let redeemed = v.select_partner().unwrap();
        let fresh = Descriptor::create(&k[0], Address::new(0, 0), 10);
        let offer = initiator_offer(&mut v, fresh, 3, redeemed.creator(), &mut rng);
        assert_eq!(offer.len(), 1);
        assert_eq!(offer[0].creator(), k[0].node_id());
    }

    #[test]
    fn link_conservation() {
        // Multiset of descriptors across both views: before minus the redeemed
        // one plus the fresh one equals after.
        let k = keys(12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = View::new(k[0].node_id(), 5);
        let mut b = View::new(k[1].node_id(), 5);
        a.insert(entry(&k[1], 0, 9)).unwrap();
        for i in 2..6 {
            a.insert(entry(&k[i], 0, 1)).unwrap();
        }
        for i in 6..11 {
            b.insert(entry(&k[i], 0, 1)).unwrap();
        }
        let mut before: Vec<DescriptorKey> = a.iter().chain(b.iter()).map(|e| e.descriptor.key()).collect();
        let redeemed = a.select_partner().unwrap();
        let fresh = Descriptor::create(&k[0], Address::new(0, 0), 99);
        before.retain(|key| *key != redeemed.descriptor.key());
        before.push(fresh.key());
        legacy_exchange(&mut a, fresh, &mut b, 3, &mut rng);
        let mut after: Vec<DescriptorKey> = a.iter().chain(b.iter()).map(|e| e.descriptor.key()).collect();
        before.sort();
        after.sort();
        assert_eq!(before, after);
        assert!(a.len() <= 5 && b.len() <= 5);
    }

    #[test]
    fn take_random_skips_excluded_and_non_swappable() {
        let k = keys(5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut v = View::new(k[0].node_id(), 5);
        v.insert(entry(&k[1], 0, 0)).unwrap();
        let mut ns = entry(&k[2], 0, 0);
        ns.swappable = false;
        v.insert(ns).unwrap();
        v.insert(entry(&k[3], 0, 0)).unwrap();
        let got = v.take_random(5, Some(k[3].node_id()), &mut rng);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].creator(), k[1].node_id());
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::default().validate().is_ok());
        let bad = ProtocolParams {
            swap_len: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ProtocolParams {
            n: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ProtocolParams {
            swap_len: 21,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
