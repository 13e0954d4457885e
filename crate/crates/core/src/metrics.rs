//! Per-cycle measurements taken by an omniscient observer, plus the
//! analytical bandwidth model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::descriptor::CORE_LEN;
use crate::identity::NodeId;
use crate::view::View;

pub const SCHEMA_VERSION: u32 = 1;

/// Stable CSV column order.
pub const CSV_COLUMNS: [&str; 20] = [
    "cycle",
    "malicious_link_fraction",
    "nonswappable_fraction",
    "eclipsed",
    "blacklisted",
    "indegree_mean",
    "indegree_std",
    "blacklisted_any",
    "alive_correct",
    "alive_malicious",
    "view_occupancy",
    "dead_link_fraction",
    "components",
    "exchanges",
    "rejected_exchanges",
    "proofs_generated",
    "false_convictions",
    "clones_completed",
    "clones_detected",
    "mean_redeemed_chain_len",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleSnapshot {
    pub cycle: u64,
    /// Share of correct nodes' links pointing at party members.
    pub malicious_link_fraction: f64,
    pub nonswappable_fraction: f64,
    /// Correct nodes whose non-empty view holds party links only.
    pub eclipsed: usize,
    /// Party members blacklisted by every alive correct node.
    pub blacklisted: usize,
    pub indegree_mean: f64,
    pub indegree_std: f64,
    /// Party members blacklisted by at least one alive correct node.
    pub blacklisted_any: usize,
    pub alive_correct: usize,
    pub alive_malicious: usize,
    /// Mean number of entries in correct nodes' views.
    pub view_occupancy: f64,
    /// Share of correct nodes' links pointing at departed nodes.
    pub dead_link_fraction: f64,
    pub components: usize,
    pub exchanges: u64,
    pub rejected_exchanges: u64,
    /// Cumulative number of proofs produced by correct nodes' own checks.
    pub proofs_generated: u64,
    /// Cumulative number of those proofs accusing a correct node.
    pub false_convictions: u64,
    pub clones_completed: u64,
    pub clones_detected: u64,
    /// Mean transfer count of descriptors redeemed this cycle.
    pub mean_redeemed_chain_len: Option<f64>,
    /// `indegree_histogram[k]` alive nodes have indegree `k`.
    pub indegree_histogram: Vec<u64>,
}

/// Detection statistics for clones made at one age.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionBucket {
    pub age: u32,
    pub clones: u64,
    pub detected: u64,
}

impl DetectionBucket {
    pub fn ratio(&self) -> Option<f64> {
        (self.clones > 0).then(|| self.detected as f64 / self.clones as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub snapshots: Vec<CycleSnapshot>,
    pub detection: Vec<DetectionBucket>,
}

impl MetricsSeries {
    pub fn new(config_hash: String, seed: u64) -> Self {
        MetricsSeries {
            schema: SCHEMA_VERSION,
            config_hash,
            seed,
            snapshots: Vec::new(),
            detection: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&CycleSnapshot> {
        self.snapshots.last()
    }

    pub fn at(&self, cycle: u64) -> Option<&CycleSnapshot> {
        self.snapshots.iter().find(|s| s.cycle == cycle)
    }

    /// One header line, one column line, then one row per cycle.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# schema={} config_hash={} seed={}",
            self.schema, self.config_hash, self.seed
        );
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for s in &self.snapshots {
            let chain = s.mean_redeemed_chain_len.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{},{:.6},{:.6},{},{},{},{:.6},{:.6},{},{},{},{},{},{},{},{}",
                s.cycle,
                s.malicious_link_fraction,
                s.nonswappable_fraction,
                s.eclipsed,
                s.blacklisted,
                s.indegree_mean,
                s.indegree_std,
                s.blacklisted_any,
                s.alive_correct,
                s.alive_malicious,
                s.view_occupancy,
                s.dead_link_fraction,
                s.components,
                s.exchanges,
                s.rejected_exchanges,
                s.proofs_generated,
                s.false_convictions,
                s.clones_completed,
                s.clones_detected,
                chain,
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("series is always serialisable")
    }

    /// Mean of `f` over snapshots with `from <= cycle < to`.
    pub fn mean_over(&self, from: u64, to: u64, f: impl Fn(&CycleSnapshot) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .snapshots
            .iter()
            .filter(|s| s.cycle >= from && s.cycle < to)
            .map(f)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// (links to party members, all links) over the given views.
pub fn malicious_links<'a>(views: impl IntoIterator<Item = &'a View>, roster: &FxHashSet<NodeId>) -> (usize, usize) {
    let mut bad = 0;
    let mut all = 0;
    for v in views {
        for e in v.iter() {
            all += 1;
            if roster.contains(&e.creator()) {
                bad += 1;
            }
        }
    }
    (bad, all)
}

pub fn malicious_link_fraction<'a>(views: impl IntoIterator<Item = &'a View>, roster: &FxHashSet<NodeId>) -> f64 {
    let (bad, all) = malicious_links(views, roster);
    ratio(bad, all)
}

pub fn nonswappable_fraction<'a>(views: impl IntoIterator<Item = &'a View>) -> f64 {
    let mut ns = 0;
    let mut all = 0;
    for v in views {
        for e in v.iter() {
            all += 1;
            if !e.swappable {
                ns += 1;
            }
        }
    }
    ratio(ns, all)
}

/// Views that are non-empty and point at party members only.
pub fn eclipsed_count<'a>(views: impl IntoIterator<Item = &'a View>, roster: &FxHashSet<NodeId>) -> usize {
    views
        .into_iter()
        .filter(|v| !v.is_empty() && v.iter().all(|e| roster.contains(&e.creator())))
        .count()
}

/// Indegree of every node in `nodes`, counted over `views`.
pub fn indegrees<'a>(nodes: &[NodeId], views: impl IntoIterator<Item = &'a View>) -> Vec<u64> {
    let pos: rustc_hash::FxHashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut deg = vec![0u64; nodes.len()];
    for v in views {
        for e in v.iter() {
            if let Some(&i) = pos.get(&e.creator()) {
                deg[i] += 1;
            }
        }
    }
    deg
}

pub fn indegree_distribution(degrees: &[u64]) -> Vec<u64> {
    let max = degrees.iter().copied().max().unwrap_or(0) as usize;
    let mut hist = vec![0u64; max + 1];
    for &d in degrees {
        hist[d as usize] += 1;
    }
    hist
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[u64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<u64>() as f64 / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Connected components of the undirected graph over `n` vertices.
pub fn component_count(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut count = n;
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            count -= 1;
        }
    }
    count
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Bandwidth of one gossip direction, assuming every message carries the
/// whole view plus the redemption cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    pub view_len: usize,
    pub swap_len: usize,
    pub redemption_cache: usize,
}

impl CostModel {
    /// Average transfers over a descriptor's lifetime: `s/ℓ` per gossip,
    /// two gossips per cycle, `ℓ` cycles.
    pub fn expected_transfers(&self) -> f64 {
        2.0 * self.swap_len as f64
    }

    pub fn descriptor_bits(t: f64) -> f64 {
        (CORE_LEN * 8) as f64 + 512.0 * t
    }

    pub fn bytes_per_direction(&self, t_avg: f64) -> f64 {
        (self.view_len + self.redemption_cache) as f64 * Self::descriptor_bits(t_avg) / 8.0
    }
}

pub fn cost_model(view_len: usize, swap_len: usize, redemption_cache: usize, t_avg: f64) -> f64 {
    CostModel {
        view_len,
        swap_len,
        redemption_cache,
    }
    .bytes_per_direction(t_avg)
}

/// Groups clone events by age; `clones` and `detected` are `(age, detected)` pairs.
pub fn detection_ratio(events: impl IntoIterator<Item = (u32, bool)>) -> Vec<DetectionBucket> {
    let mut by_age: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for (age, hit) in events {
        let b = by_age.entry(age).or_default();
        b.0 += 1;
        b.1 += u64::from(hit);
    }
    by_age
        .into_iter()
        .map(|(age, (clones, detected))| DetectionBucket { age, clones, detected })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{Address, Descriptor};
    use crate::identity::{KeyedHashScheme, SignatureScheme};
    use crate::view::ViewEntry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> (Vec<crate::identity::KeyPair>, Vec<NodeId>) {
        let s = KeyedHashScheme::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k: Vec<_> = (0..n).map(|_| s.generate(&mut rng)).collect();
        let i = k.iter().map(|k| k.node_id()).collect();
        (k, i)
    }

    fn view_of(owner: NodeId, cap: usize, keys: &[&crate::identity::KeyPair]) -> View {
        let mut v = View::new(owner, cap);
        for k in keys {
            v.insert(ViewEntry::new(Descriptor::create(k, Address::new(0, 0), 0), 0)).unwrap();
        }
        v
    }

    #[test]
    fn cost_model_matches_arithmetic() {
        assert_eq!(cost_model(20, 3, 5, 6.0), 10_750.0);
        assert_eq!(cost_model(20, 3, 5, 0.0), 1_150.0);
        let m = CostModel {
            view_len: 20,
            swap_len: 3,
            redemption_cache: 5,
        };
        assert_eq!(m.expected_transfers(), 6.0);
        assert_eq!(CostModel::descriptor_bits(6.0), 3440.0);
    }

    #[test]
    fn fractions_and_eclipse() {
        let (k, id) = ids(5);
        let roster: FxHashSet<NodeId> = [id[3], id[4]].into_iter().collect();
        let a = view_of(id[0], 4, &[&k[1], &k[3]]);
        let b = view_of(id[1], 4, &[&k[3], &k[4]]);
        let empty = View::new(id[2], 4);
        let views = [a, b, empty];
        assert_eq!(malicious_link_fraction(&views, &roster), 0.75);
        assert_eq!(eclipsed_count(&views, &roster), 1);
        assert_eq!(nonswappable_fraction(&views), 0.0);
        assert_eq!(malicious_link_fraction(&views, &FxHashSet::default()), 0.0);
        assert_eq!(malicious_link_fraction(&views[2..], &roster), 0.0);
    }

    #[test]
    fn indegree_conservation() {
        let (k, id) = ids(4);
        let views = [
            view_of(id[0], 3, &[&k[1], &k[2]]),
            view_of(id[1], 3, &[&k[0], &k[2], &k[3]]),
            view_of(id[2], 3, &[&k[1]]),
        ];
        let deg = indegrees(&id, &views);
        assert_eq!(deg, vec![1, 2, 2, 1]);
        assert_eq!(deg.iter().sum::<u64>() as usize, views.iter().map(|v| v.len()).sum::<usize>());
        assert_eq!(indegree_distribution(&deg), vec![0, 2, 2]);
        let (m, s) = mean_std(&deg);
        assert_eq!(m, 1.5);
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn components_union_find() {
        assert_eq!(component_count(5, [(0, 1), (1, 2), (3, 4)]), 2);
        assert_eq!(component_count(3, []), 3);
        assert_eq!(component_count(0, []), 0);
    }

    #[test]
    fn detection_buckets() {
        let b = detection_ratio([(0, true), (0, true), (0, false), (18, false)]);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].ratio(), Some(2.0 / 3.0));
        assert_eq!(b[1].ratio(), Some(0.0));
        assert!(detection_ratio([]).is_empty());
        let none = DetectionBucket {
            age: 3,
            clones: 0,
            detected: 0,
        };
        assert_eq!(none.ratio(), None);
    }

    #[test]
    fn csv_layout() {
        let mut s = MetricsSeries::new("abc".into(), 7);
        s.snapshots.push(CycleSnapshot {
            cycle: 0,
            malicious_link_fraction: 0.02,
            nonswappable_fraction: 0.0,
            eclipsed: 0,
            blacklisted: 0,
            indegree_mean: 20.0,
            indegree_std: 1.5,
            blacklisted_any: 0,
            alive_correct: 980,
            alive_malicious: 20,
            view_occupancy: 20.0,
            dead_link_fraction: 0.0,
            components: 1,
            exchanges: 1000,
            rejected_exchanges: 0,
            proofs_generated: 0,
            false_convictions: 0,
            clones_completed: 0,
            clones_detected: 0,
            mean_redeemed_chain_len: None,
            indegree_histogram: vec![],
        });
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# schema=1 config_hash=abc seed=7");
        assert!(lines[1].starts_with("cycle,malicious_link_fraction,nonswappable_fraction,eclipsed,blacklisted,indegree_mean,indegree_std"));
        assert_eq!(lines[2].split(',').count(), CSV_COLUMNS.len());
        assert!(lines[2].starts_with("0,0.020000,0.000000,0,0,20.000000,1.500000"));
        let back: MetricsSeries = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }
}
