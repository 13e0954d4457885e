//! Sample and redemption caches, and the two violation checks run against
//! the sample cache.

use std::collections::VecDeque;

use rustc_hash::FxHashMap;

use crate::descriptor::{chain_relation, ChainRelation, Descriptor, DescriptorKey};
use crate::identity::NodeId;
use crate::secure::proof::ViolationProof;

struct Sample {
    descriptor: Descriptor,
    refreshed: u64,
}

/// Copies of every descriptor a node has seen, keyed by creation event.
///
/// For each key only the longest compatible chain is kept. Entries expire
/// `ttl` cycles after they were last replaced; `None` keeps them forever.
pub struct SampleCache {
    ttl: Option<u64>,
    samples: FxHashMap<DescriptorKey, Sample>,
    by_creator: FxHashMap<NodeId, Vec<u64>>,
    expiry: VecDeque<(u64, DescriptorKey)>,
}

impl SampleCache {
    pub fn new(ttl: Option<u64>) -> Self {
        SampleCache {
            ttl,
            samples: FxHashMap::default(),
            by_creator: FxHashMap::default(),
            expiry: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, key: &DescriptorKey) -> Option<&Descriptor> {
        self.samples.get(key).map(|s| &s.descriptor)
    }

    /// Cached descriptor by the same creator, with a different key, whose
    /// timestamp lies strictly closer than `period_ms`.
    pub fn too_close(&self, d: &Descriptor, period_ms: u64) -> Option<&Descriptor> {
        let ts = d.timestamp();
        let stamps = self.by_creator.get(&d.creator())?;
        let other = stamps.iter().find(|&&t| t != ts && t.abs_diff(ts) < period_ms)?;
        self.get(&DescriptorKey {
            creator: d.creator(),
            timestamp: *other,
        })
    }

    /// Stores `d` unless an equal or longer version is already cached.
    /// The caller is responsible for having ruled out conflicts.
    pub fn record(&mut self, d: &Descriptor, cycle: u64) {
        let key = d.key();
        match self.samples.get_mut(&key) {
            Some(s) => {
                if d.transfer_count() > s.descriptor.transfer_count() {
                    s.descriptor = d.clone();
                    s.refreshed = cycle;
                    self.expiry.push_back((cycle, key));
                }
            }
            None => {
                self.samples.insert(
                    key,
                    Sample {
                        descriptor: d.clone(),
                        refreshed: cycle,
                    },
                );
                self.by_creator.entry(key.creator).or_default().push(key.timestamp);
                self.expiry.push_back((cycle, key));
            }
        }
    }

    /// Drops samples that have not been refreshed for `ttl` cycles.
    pub fn expire(&mut self, now: u64) {
        let Some(ttl) = self.ttl else { return };
        while let Some(&(stamp, key)) = self.expiry.front() {
            if stamp + ttl > now {
                break;
            }
            self.expiry.pop_front();
            let stale = matches!(self.samples.get(&key), Some(s) if s.refreshed == stamp);
            if stale {
                self.samples.remove(&key);
                if let Some(v) = self.by_creator.get_mut(&key.creator) {
                    if let Some(i) = v.iter().position(|&t| t == key.timestamp) {
                        v.swap_remove(i);
                    }
                    if v.is_empty() {
                        self.by_creator.remove(&key.creator);
                    }
                }
            }
        }
    }
}

/// Frequency check: two distinct descriptors by one creator closer in time
/// than the gossip period convict that creator.
pub fn frequency_check(cache: &SampleCache, d: &Descriptor, period_ms: u64) -> Option<ViolationProof> {
    cache
        .too_close(d, period_ms)
        .map(|other| ViolationProof::frequency(other.clone(), d.clone()))
}

/// Ownership check: a cached version of the same creation event must be
/// compatible with `d`. On a fork the last common owner is convicted;
/// otherwise the longer version is cached.
pub fn ownership_check(cache: &mut SampleCache, d: &Descriptor, cycle: u64) -> Option<ViolationProof> {
    if let Some(cached) = cache.get(&d.key()) {
        if let Ok(ChainRelation::Conflict { violator }) = chain_relation(cached, d) {
            return Some(ViolationProof::cloning(cached.clone(), d.clone(), violator));
        }
    }
    cache.record(d, cycle);
    None
}

/// The last `capacity` descriptors this node redeemed, re-shared as samples
/// for `ttl` cycles.
pub struct RedemptionCache {
    capacity: usize,
    ttl: u64,
    entries: VecDeque<(Descriptor, u64)>,
}

impl RedemptionCache {
    pub fn new(capacity: usize, ttl: u64) -> Self {
        RedemptionCache {
            capacity,
            ttl,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, d: Descriptor, cycle: u64) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((d, cycle));
    }

    pub fn expire(&mut self, now: u64) {
        while matches!(self.entries.front(), Some((_, c)) if c + self.ttl <= now) {
            self.entries.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Descriptor> {
        self.entries.iter().map(|(d, _)| d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::Address;
    use crate::identity::{KeyPair, KeyedHashScheme, SignatureScheme};
    use crate::secure::proof::ViolationKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SEC: u64 = 1000;

    fn setup(n: usize) -> (KeyedHashScheme, Vec<KeyPair>) {
        let s = KeyedHashScheme::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = (0..n).map(|_| s.generate(&mut rng)).collect();
        (s, k)
    }

    fn walk(s: &KeyedHashScheme, k: &[KeyPair], path: &[usize], ts: u64) -> Descriptor {
        let mut d = Descriptor::create(&k[path[0]], Address::new(0, 0), ts);
        for w in path.windows(2) {
            d = d.transfer(&k[w[0]], k[w[1]].node_id(), s).unwrap();
        }
        d
    }

    #[test]
    fn frequency_boundary_is_strict() {
        let (s, k) = setup(2);
        let mut cache = SampleCache::new(None);
        cache.record(&walk(&s, &k, &[0], 100 * SEC), 0);
        let p = frequency_check(&cache, &walk(&s, &k, &[0], 105 * SEC), 10 * SEC).expect("proof");
        assert_eq!(p.kind, ViolationKind::Frequency);
        assert_eq!(p.accused, k[0].node_id());
        assert!(frequency_check(&cache, &walk(&s, &k, &[0], 110 * SEC), 10 * SEC).is_none());
        assert!(frequency_check(&cache, &walk(&s, &k, &[1], 100 * SEC), 10 * SEC).is_none());
        // Same creation event is the ownership check's concern.
        assert!(frequency_check(&cache, &walk(&s, &k, &[0, 1], 100 * SEC), 10 * SEC).is_none());
    }

    #[test]
    fn ownership_keeps_longest() {
        let (s, k) = setup(7);
        let mut cache = SampleCache::new(None);
        let abc = walk(&s, &k, &[0, 1, 2], 5);
        let abcde = walk(&s, &k, &[0, 1, 2, 3, 4], 5);
        assert!(ownership_check(&mut cache, &abc, 0).is_none());
        assert!(ownership_check(&mut cache, &abcde, 0).is_none());
        assert_eq!(cache.get(&abc.key()), Some(&abcde));
        // A shorter compatible version does not replace the longer one.
        assert!(ownership_check(&mut cache, &abc, 0).is_none());
        assert_eq!(cache.get(&abc.key()), Some(&abcde));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn ownership_conflict_blames_fork_point() {
        let (s, k) = setup(7);
        let mut cache = SampleCache::new(None);
        ownership_check(&mut cache, &walk(&s, &k, &[0, 1, 2, 3, 4], 5), 0);
        let p = ownership_check(&mut cache, &walk(&s, &k, &[0, 1, 5, 6], 5), 0).expect("proof");
        assert_eq!(p.kind, ViolationKind::Cloning);
        assert_eq!(p.accused, k[1].node_id());
        assert!(p.validate(&s, 10 * SEC));
    }

    #[test]
    fn unseen_key_is_cached() {
        let (s, k) = setup(2);
        let mut cache = SampleCache::new(None);
        let d = walk(&s, &k, &[0, 1], 9);
        assert!(ownership_check(&mut cache, &d, 3).is_none());
        assert_eq!(cache.get(&d.key()), Some(&d));
    }

    #[test]
    fn samples_expire_after_ttl() {
        let (s, k) = setup(3);
        let mut cache = SampleCache::new(Some(4));
        let a = walk(&s, &k, &[0], 0);
        let b = walk(&s, &k, &[1], 0);
        cache.record(&a, 0);
        cache.record(&b, 2);
        cache.expire(3);
        assert_eq!(cache.len(), 2);
        cache.expire(4);
        assert!(cache.get(&a.key()).is_none());
        assert!(cache.get(&b.key()).is_some());
        // Refreshing with a longer chain restarts the clock.
        cache.record(&walk(&s, &k, &[1, 2], 0), 5);
        cache.expire(6);
        assert!(cache.get(&b.key()).is_some());
        cache.expire(9);
        assert!(cache.is_empty());
        assert!(frequency_check(&cache, &walk(&s, &k, &[0], 1), 10).is_none());
    }

    #[test]
    fn redemption_cache_ring_and_ttl() {
        let (s, k) = setup(1);
        let mut rc = RedemptionCache::new(2, 6);
        for ts in 0..3 {
            rc.push(walk(&s, &k, &[0], ts), ts);
        }
        assert_eq!(rc.len(), 2);
        let stamps: Vec<u64> = rc.iter().map(|d| d.timestamp()).collect();
        assert_eq!(stamps, vec![1, 2]);
        rc.expire(7);
        assert_eq!(rc.len(), 1);
        rc.expire(8);
        assert!(rc.is_empty());

        let mut none = RedemptionCache::new(0, 6);
        none.push(walk(&s, &k, &[0], 0), 0);
        assert!(none.is_empty());
    }
}
