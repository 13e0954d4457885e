//! Deterministic cycle-driven simulation kernel.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{record_clone_sends, AttackPlan, CloneEvent, MaliciousNode, MaliciousPool, Strategy};
use crate::descriptor::{Address, Descriptor, DescriptorKey};
use crate::identity::{Clock, Ed25519Scheme, KeyPair, KeyedHashScheme, NodeId, SignatureScheme};
use crate::metrics::{self, CycleSnapshot, MetricsSeries};
use crate::secure::{run_exchange, Env, NodeState, Outcome, Party, SecureConfig, ViolationKind, ViolationProof};
use crate::view::{absorb, initiator_offer, responder_reply, CyclonError, ProtocolParams, View, ViewEntry};
use crate::SimRng;

/// Port every simulated node listens on.
const PORT: u16 = 4000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Params(#[from] CyclonError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Legacy,
    #[default]
    Secure,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignatureBackend {
    /// Fast keyed-hash stand-in; same wire sizes as a 32-byte signature.
    #[default]
    KeyedHash,
    Ed25519,
}

impl SignatureBackend {
    pub fn scheme(self) -> Box<dyn SignatureScheme> {
        match self {
            SignatureBackend::KeyedHash => Box::new(KeyedHashScheme::new()),
            SignatureBackend::Ed25519 => Box::new(Ed25519Scheme::new()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChurnEvent {
    /// A random `fraction` of alive nodes fails silently.
    Fail { cycle: u64, fraction: f64 },
    /// `count` new correct nodes join through random contacts.
    Join { cycle: u64, count: usize },
    /// Every party member leaves at once.
    DepartMalicious { cycle: u64 },
}

impl ChurnEvent {
    pub fn cycle(&self) -> u64 {
        match *self {
            ChurnEvent::Fail { cycle, .. } | ChurnEvent::Join { cycle, .. } | ChurnEvent::DepartMalicious { cycle } => {
                cycle
            }
        }
    }
}

/// Overrides of the secure protocol defaults; `None` keeps the default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tuning {
    pub redemption_ttl: Option<u64>,
    /// Sample lifetime in cycles; 0 keeps samples forever. Default `2ℓ`.
    pub sample_ttl: Option<u64>,
    pub max_fresh_skew_ms: Option<u64>,
    pub proof_piggyback: Option<usize>,
    pub nonswap_swap_cap: Option<usize>,
    /// Set to false to detect violations without blacklisting anybody.
    pub conviction: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: ProtocolParams,
    pub mode: Mode,
    pub titfortat: bool,
    pub cycles: u64,
    pub seed: u64,
    /// Independent drop probability of every protocol message.
    pub message_loss: f64,
    /// Node clocks are skewed uniformly within this bound.
    pub max_clock_skew_ms: u64,
    /// Links a joining node receives from its contact.
    pub join_links: usize,
    /// Hops a proof flood travels per cycle; `None` is unbounded.
    pub flood_hops: Option<u32>,
    pub signature: SignatureBackend,
    pub attack: Option<AttackPlan>,
    pub churn: Vec<ChurnEvent>,
    pub tuning: Tuning,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            params: ProtocolParams::default(),
            mode: Mode::Secure,
            titfortat: true,
            cycles: 300,
            seed: 1,
            message_loss: 0.0,
            max_clock_skew_ms: 0,
            join_links: 5,
            flood_hops: None,
            signature: SignatureBackend::KeyedHash,
            attack: None,
            churn: Vec::new(),
            tuning: Tuning::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.params.view_len == 0 {
            return bad("view length must be positive".into());
        }
        if !(0.0..1.0).contains(&self.message_loss) {
            return bad(format!("message loss {} outside [0, 1)", self.message_loss));
        }
        if self.max_clock_skew_ms * 2 >= self.params.period_ms {
            return bad("clock skew must stay below half a period".into());
        }
        if let Some(plan) = &self.attack {
            if !(0.0..=1.0).contains(&plan.malicious_fraction) {
                return bad(format!("malicious fraction {} outside [0, 1]", plan.malicious_fraction));
            }
            if plan.party_size(self.params.n) >= self.params.n {
                return bad("at least one node must be correct".into());
            }
            if let Strategy::FrequencySpam { rate: 0 } = plan.strategy {
                return bad("spam rate must be positive".into());
            }
            if self.mode == Mode::Legacy && plan.strategy != Strategy::HubAttack && plan.party_size(self.params.n) > 0 {
                return bad("legacy mode only supports the hub attack".into());
            }
        }
        for e in &self.churn {
            if let ChurnEvent::Fail { fraction, .. } = e {
                if !(0.0..=1.0).contains(fraction) {
                    return bad(format!("failure fraction {fraction} outside [0, 1]"));
                }
            }
        }
        if self.tuning.nonswap_swap_cap == Some(0) {
            return bad("non-swappable swap cap must be positive".into());
        }
        Ok(())
    }

    pub fn secure_config(&self) -> SecureConfig {
        let p = &self.params;
        let t = &self.tuning;
        let mut c = SecureConfig::for_params(p.view_len, p.swap_len, p.redemption_cache, p.period_ms);
        c.titfortat = self.titfortat;
        if let Some(v) = t.redemption_ttl {
            c.redemption_ttl = v;
        }
        if let Some(v) = t.sample_ttl {
            c.sample_ttl = (v > 0).then_some(v);
        }
        if let Some(v) = t.max_fresh_skew_ms {
            c.max_fresh_skew_ms = v;
        }
        if let Some(v) = t.proof_piggyback {
            c.proof_piggyback = v;
        }
        if let Some(v) = t.nonswap_swap_cap {
            c.nonswap_swap_cap = v;
        }
        if let Some(v) = t.conviction {
            c.conviction = v;
        }
        c
    }

    /// Short stable digest of the whole configuration, seed included.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config is always serialisable");
        hex::encode(&Sha256::digest(bytes)[..8])
    }
}

/// A plain Cyclon node.
pub struct LegacyNode {
    pub keys: KeyPair,
    pub address: Address,
    pub clock: Clock,
    pub view: View,
}

pub enum PeerNode {
    Legacy(LegacyNode),
    Correct(NodeState),
    Malicious(MaliciousNode),
}

pub struct Peer {
    pub id: NodeId,
    pub alive: bool,
    pub malicious: bool,
    pub node: PeerNode,
}

impl Peer {
    pub fn view(&self) -> &View {
        match &self.node {
            PeerNode::Legacy(l) => &l.view,
            PeerNode::Correct(s) => &s.view,
            PeerNode::Malicious(m) => &m.state.view,
        }
    }

    fn view_mut(&mut self) -> &mut View {
        match &mut self.node {
            PeerNode::Legacy(l) => &mut l.view,
            PeerNode::Correct(s) => &mut s.view,
            PeerNode::Malicious(m) => &mut m.state.view,
        }
    }

    pub fn secure_state(&self) -> Option<&NodeState> {
        match &self.node {
            PeerNode::Legacy(_) => None,
            PeerNode::Correct(s) => Some(s),
            PeerNode::Malicious(m) => Some(&m.state),
        }
    }

    fn is_correct(&self) -> bool {
        !self.malicious
    }
}

#[derive(Default)]
struct Counters {
    exchanges: u64,
    rejected: u64,
    proofs_generated: u64,
    false_convictions: u64,
    chain_sum: u64,
    chain_count: u64,
}

pub struct Simulation {
    config: ScenarioConfig,
    secure: SecureConfig,
    plan: AttackPlan,
    scheme: Box<dyn SignatureScheme>,
    rng: SimRng,
    cycle: u64,
    peers: Vec<Peer>,
    index: FxHashMap<NodeId, usize>,
    roster: FxHashSet<NodeId>,
    pool: MaliciousPool,
    counters: Counters,
    clones: FxHashMap<DescriptorKey, CloneEvent>,
    detected_clones: FxHashSet<DescriptorKey>,
    series: MetricsSeries,
}

/// Runs a scenario from cycle 0 to its end.
pub fn run(config: &ScenarioConfig) -> Result<MetricsSeries, ConfigError> {
    let mut sim = Simulation::new(config.clone())?;
    sim.run_to_end();
    Ok(sim.into_series())
}

fn pair_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (l, r) = v.split_at_mut(b);
        (&mut l[a], &mut r[0])
    } else {
        let (l, r) = v.split_at_mut(a);
        (&mut r[0], &mut l[b])
    }
}

fn with_party<T>(
    node: &mut PeerNode,
    pool: &MaliciousPool,
    plan: &AttackPlan,
    f: impl FnOnce(&mut dyn Party) -> T,
) -> T {
    match node {
        PeerNode::Correct(s) => f(s),
        PeerNode::Malicious(m) => f(&mut m.armed(pool, plan)),
        PeerNode::Legacy(_) => unreachable!("legacy peers never run secure exchanges"),
    }
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let secure = config.secure_config();
        let plan = config.attack.clone().unwrap_or_default();
        let scheme = config.signature.scheme();
        let mut rng = SimRng::seed_from_u64(config.seed);
        let p = config.params;

        let keys: Vec<KeyPair> = (0..p.n).map(|_| scheme.generate(&mut rng)).collect();
        let clocks: Vec<Clock> = (0..p.n)
            .map(|_| Clock::with_random_skew(p.period_ms, config.max_clock_skew_ms, &mut rng))
            .collect();
        let party = if config.attack.is_some() { plan.party_size(p.n) } else { 0 };
        let mut is_malicious = vec![false; p.n];
        for i in sample(&mut rng, p.n, party) {
            is_malicious[i] = true;
        }
        let window = plan.pool_window.unwrap_or(p.view_len as u64);
        let pool = MaliciousPool::new(
            keys.iter().zip(&is_malicious).filter(|(_, m)| **m).map(|(k, _)| k.clone()),
            window,
        );
        let roster: FxHashSet<NodeId> = pool.roster().iter().copied().collect();

        let mut peers: Vec<Peer> = keys
            .iter()
            .zip(&clocks)
            .enumerate()
            .map(|(i, (k, clock))| {
                let address = Address::new(i as u32, PORT);
                let node = match config.mode {
                    Mode::Legacy => PeerNode::Legacy(LegacyNode {
                        keys: k.clone(),
                        address,
                        clock: *clock,
                        view: View::new(k.node_id(), p.view_len),
                    }),
                    Mode::Secure => {
                        let state = NodeState::new(k.clone(), address, *clock, &secure);
                        if is_malicious[i] {
                            PeerNode::Malicious(MaliciousNode::new(state, plan.strategy))
                        } else {
                            PeerNode::Correct(state)
                        }
                    }
                };
                Peer {
                    id: k.node_id(),
                    alive: true,
                    malicious: is_malicious[i],
                    node,
                }
            })
            .collect();
        let index = peers.iter().enumerate().map(|(i, p)| (p.id, i)).collect();

        // Back-dated so that no creator has two descriptors within a period.
        let fill = p.view_len.min(p.n - 1);
        let mut issued = vec![0i64; p.n];
        for h in 0..p.n {
            let holder = keys[h].node_id();
            for pick in sample(&mut rng, p.n - 1, fill) {
                let c = if pick >= h { pick + 1 } else { pick };
                let k = issued[c];
                issued[c] += 1;
                let d = Descriptor::create(&keys[c], Address::new(c as u32, PORT), clocks[c].at(-(k + 1)));
                let d = match config.mode {
                    Mode::Legacy => d,
                    Mode::Secure => d.transfer(&keys[c], holder, scheme.as_ref()).expect("creator owns it"),
                };
                peers[h]
                    .view_mut()
                    .insert(ViewEntry::new(d, k as u32))
                    .expect("distinct creators fit the view");
            }
        }

        let series = MetricsSeries::new(config.config_hash(), config.seed);
        Ok(Simulation {
            config,
            secure,
            plan,
            scheme,
            rng,
            cycle: 0,
            peers,
            index,
            roster,
            pool,
            counters: Counters::default(),
            clones: FxHashMap::default(),
            detected_clones: FxHashSet::default(),
            series,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// Next cycle to run.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn peers(&self) -> &[Peer] {
        &self.peers
    }

    pub fn peer(&self, id: &NodeId) -> Option<&Peer> {
        self.index.get(id).map(|&i| &self.peers[i])
    }

    pub fn roster(&self) -> &FxHashSet<NodeId> {
        &self.roster
    }

    pub fn scheme(&self) -> &dyn SignatureScheme {
        self.scheme.as_ref()
    }

    pub fn series(&self) -> &MetricsSeries {
        &self.series
    }

    pub fn clone_events(&self) -> impl Iterator<Item = (&DescriptorKey, &CloneEvent)> {
        self.clones.iter()
    }

    pub fn clone_detected(&self, key: &DescriptorKey) -> bool {
        self.detected_clones.contains(key)
    }

    pub fn run_to_end(&mut self) {
        while self.cycle < self.config.cycles {
            self.step();
        }
        self.series.detection = self.detection_buckets();
    }

    pub fn into_series(self) -> MetricsSeries {
        self.series
    }

    fn attack_active(&self, cycle: u64) -> bool {
        !self.roster.is_empty() && self.plan.active(cycle)
    }

    fn hub_active(&self, cycle: u64) -> bool {
        self.attack_active(cycle) && self.plan.strategy == Strategy::HubAttack
    }

    /// Runs one full cycle and records its snapshot.
    pub fn step(&mut self) {
        let c = self.cycle;
        self.counters.exchanges = 0;
        self.counters.rejected = 0;
        self.counters.chain_sum = 0;
        self.counters.chain_count = 0;

        self.apply_churn(c);
        if self.attack_active(c) {
            for p in &mut self.peers {
                if let PeerNode::Malicious(m) = &mut p.node {
                    if !m.is_active() {
                        m.activate();
                    }
                }
            }
        }
        if self.hub_active(c) {
            self.pool.evict(c);
            for p in self.peers.iter().filter(|p| p.alive && p.malicious) {
                let d = match &p.node {
                    PeerNode::Legacy(l) => Descriptor::create(&l.keys, l.address, l.clock.now(c)),
                    PeerNode::Malicious(m) => m.state.fresh_descriptor(c),
                    PeerNode::Correct(_) => continue,
                };
                self.pool.add(d, c);
            }
        }
        for p in self.peers.iter_mut().filter(|p| p.alive) {
            match &mut p.node {
                PeerNode::Legacy(l) => l.view.age(),
                PeerNode::Correct(s) => s.tick(c),
                PeerNode::Malicious(m) => m.tick(c, &self.pool),
            }
        }

        let mut order: Vec<usize> = (0..self.peers.len()).filter(|&i| self.peers[i].alive).collect();
        order.shuffle(&mut self.rng);
        for i in order {
            let reps = match &self.peers[i].node {
                PeerNode::Malicious(m) => m.initiations(),
                _ => 1,
            };
            for _ in 0..reps {
                match self.config.mode {
                    Mode::Legacy => self.legacy_exchange(i, c),
                    Mode::Secure => self.secure_exchange(i, c),
                }
            }
        }
        if self.config.mode == Mode::Secure {
            self.flood(c);
        }
        let snap = self.snapshot(c);
        self.series.snapshots.push(snap);
        self.cycle += 1;
    }

    fn deliver(loss: f64, rng: &mut dyn RngCore) -> bool {
        loss <= 0.0 || rng.gen::<f64>() >= loss
    }

    fn legacy_exchange(&mut self, i: usize, c: u64) {
        let s = self.config.params.swap_len;
        let loss = self.config.message_loss;
        let hub = self.hub_active(c);
        let i_attacks = hub && self.peers[i].malicious;
        let entry = {
            let view = self.peers[i].view_mut();
            loop {
                match view.select_partner() {
                    Ok(e) if i_attacks && self.roster.contains(&e.creator()) => continue,
                    Ok(e) => break Some(e),
                    Err(_) => break None,
                }
            }
        };
        let Some(entry) = entry else { return };
        self.counters.exchanges += 1;
        let partner = entry.creator();
        let initiator = self.peers[i].id;
        let rng = &mut self.rng;

        let offer = if i_attacks {
            self.pool
                .hub_attack_view_aged(s, None, c, rng)
                .into_iter()
                .map(|(d, age)| ViewEntry::new(d, self.plan.claimed_age.unwrap_or(age)))
                .collect()
        } else {
            let PeerNode::Legacy(l) = &mut self.peers[i].node else { unreachable!() };
            let fresh = Descriptor::create(&l.keys, l.address, l.clock.now(c));
            initiator_offer(&mut l.view, fresh, s, partner, rng)
        };
        let retained: Vec<ViewEntry> = if i_attacks { Vec::new() } else { offer[1..].to_vec() };

        let j = self.index.get(&partner).copied().filter(|&j| self.peers[j].alive);
        let Some(j) = j.filter(|_| Self::deliver(loss, rng)) else {
            absorb(self.peers[i].view_mut(), Vec::new(), retained);
            return;
        };
        let (a, b) = pair_mut(&mut self.peers, i, j);
        let reply = if hub && b.malicious {
            self.pool
                .hub_attack_view_aged(s, None, c, rng)
                .into_iter()
                .map(|(d, age)| ViewEntry::new(d, self.plan.claimed_age.unwrap_or(age)))
                .collect()
        } else {
            responder_reply(b.view_mut(), s, initiator, rng)
        };
        let kept = if hub && b.malicious { Vec::new() } else { reply.clone() };
        absorb(b.view_mut(), offer, kept);
        let received = if Self::deliver(loss, rng) { reply } else { Vec::new() };
        absorb(a.view_mut(), received, retained);
    }

    fn secure_exchange(&mut self, i: usize, c: u64) {
        let Simulation {
            config,
            secure,
            plan,
            scheme,
            rng,
            peers,
            index,
            roster,
            pool,
            counters,
            clones,
            detected_clones,
            ..
        } = self;
        let env = Env {
            scheme: scheme.as_ref(),
            config: secure,
            cycle: c,
        };
        let Some(opened) = with_party(&mut peers[i].node, pool, plan, |p| p.initiate(&env, rng)) else {
            return;
        };
        counters.exchanges += 1;
        let partner = opened.0.partner;
        let Some(j) = index.get(&partner).copied().filter(|&j| peers[j].alive) else {
            with_party(&mut peers[i].node, pool, plan, |p| p.finish(opened.0, &env));
            return;
        };
        let loss = config.message_loss;
        let mut deliver = |r: &mut dyn RngCore| Self::deliver(loss, r);
        let (a, b) = pair_mut(peers, i, j);
        let report = with_party(&mut a.node, pool, plan, |ini| {
            with_party(&mut b.node, pool, plan, |res| run_exchange(ini, res, opened, &env, rng, &mut deliver))
        });
        match report.outcome {
            Outcome::Completed => {
                if a.is_correct() && b.is_correct() {
                    counters.chain_sum += report.redeemed_chain_len as u64;
                    counters.chain_count += 1;
                }
            }
            Outcome::Rejected(_) | Outcome::Violation => counters.rejected += 1,
            Outcome::Lost => {}
        }
        for peer in [a, b] {
            match &mut peer.node {
                PeerNode::Correct(s) => {
                    for p in s.take_detections() {
                        Self::count_detection(counters, roster, clones, detected_clones, &p);
                    }
                }
                PeerNode::Malicious(m) => {
                    m.state.take_detections();
                    m.state.take_outbox();
                    let log = m.state.take_pending_log();
                    if !log.is_empty() {
                        record_clone_sends(clones, peer.id, c, log);
                    }
                }
                PeerNode::Legacy(_) => {}
            }
        }
    }

    fn count_detection(
        counters: &mut Counters,
        roster: &FxHashSet<NodeId>,
        clones: &FxHashMap<DescriptorKey, CloneEvent>,
        detected: &mut FxHashSet<DescriptorKey>,
        proof: &ViolationProof,
    ) {
        counters.proofs_generated += 1;
        if !roster.contains(&proof.accused) {
            counters.false_convictions += 1;
        }
        if proof.kind == ViolationKind::Cloning {
            let key = proof.evidence[0].key();
            if clones.contains_key(&key) {
                detected.insert(key);
            }
        }
    }

    /// Delivers every proof convicted this cycle, hop by hop.
    fn flood(&mut self, c: u64) {
        let env = Env {
            scheme: self.scheme.as_ref(),
            config: &self.secure,
            cycle: c,
        };
        let budget = self.config.flood_hops.unwrap_or(u32::MAX);
        let mut queue: VecDeque<(usize, ViolationProof, u32)> = VecDeque::new();
        let push_from = |peer: &mut Peer, hop: u32, queue: &mut VecDeque<(usize, ViolationProof, u32)>, index: &FxHashMap<NodeId, usize>| {
            let PeerNode::Correct(s) = &mut peer.node else { return };
            let out = s.take_outbox();
            if out.is_empty() || hop > budget {
                return;
            }
            let targets = s.flood_targets();
            for p in out {
                for t in &targets {
                    if let Some(&ti) = index.get(t) {
                        queue.push_back((ti, p.clone(), hop));
                    }
                }
            }
        };
        for peer in self.peers.iter_mut().filter(|p| p.alive) {
            push_from(peer, 1, &mut queue, &self.index);
        }
        while let Some((t, proof, hop)) = queue.pop_front() {
            let peer = &mut self.peers[t];
            if !peer.alive {
                continue;
            }
            let PeerNode::Correct(s) = &mut peer.node else { continue };
            if s.receive_proof(proof, &env) {
                push_from(peer, hop + 1, &mut queue, &self.index);
            }
        }
    }

    fn apply_churn(&mut self, c: u64) {
        let events: Vec<ChurnEvent> = self.config.churn.iter().filter(|e| e.cycle() == c).copied().collect();
        for e in events {
            match e {
                ChurnEvent::Fail { fraction, .. } => {
                    let alive: Vec<usize> = (0..self.peers.len()).filter(|&i| self.peers[i].alive).collect();
                    let k = ((fraction * alive.len() as f64).round() as usize).min(alive.len());
                    for pick in sample(&mut self.rng, alive.len(), k) {
                        self.peers[alive[pick]].alive = false;
                    }
                }
                ChurnEvent::Join { count, .. } => {
                    for _ in 0..count {
                        self.join(c);
                    }
                }
                ChurnEvent::DepartMalicious { .. } => {
                    for p in self.peers.iter_mut().filter(|p| p.malicious) {
                        p.alive = false;
                    }
                }
            }
        }
    }

    /// Adds one correct node, seeded with links handed over by a random
    /// alive correct contact.
    fn join(&mut self, c: u64) {
        let p = self.config.params;
        let keys = self.scheme.generate(&mut self.rng);
        let clock = Clock::with_random_skew(p.period_ms, self.config.max_clock_skew_ms, &mut self.rng);
        let id = keys.node_id();
        let address = Address::new(self.peers.len() as u32, PORT);
        let contacts: Vec<usize> = (0..self.peers.len())
            .filter(|&i| self.peers[i].alive && self.peers[i].is_correct() && !self.peers[i].view().is_empty())
            .collect();
        let contact = contacts.choose(&mut self.rng).copied();
        let j = self.config.join_links;
        let node = match self.config.mode {
            Mode::Legacy => {
                let mut view = View::new(id, p.view_len);
                if let Some(ci) = contact {
                    let from = self.peers[ci].view();
                    let k = j.min(from.len());
                    for pick in sample(&mut self.rng, from.len(), k) {
                        let _ = view.insert(from.entries()[pick].clone());
                    }
                }
                PeerNode::Legacy(LegacyNode {
                    keys,
                    address,
                    clock,
                    view,
                })
            }
            Mode::Secure => {
                let mut state = NodeState::new(keys, address, clock, &self.secure);
                if let Some(ci) = contact {
                    let env = Env {
                        scheme: self.scheme.as_ref(),
                        config: &self.secure,
                        cycle: c,
                    };
                    let PeerNode::Correct(s) = &mut self.peers[ci].node else { unreachable!() };
                    let (sent, transfers) = s.pick_transfers(j, id, &env, &mut self.rng);
                    s.mark_nonswappable(&sent);
                    for t in transfers {
                        let _ = state.view.insert(ViewEntry::non_swappable(t.descriptor, t.age));
                    }
                }
                PeerNode::Correct(state)
            }
        };
        self.index.insert(id, self.peers.len());
        self.peers.push(Peer {
            id,
            alive: true,
            malicious: false,
            node,
        });
    }

    fn detection_buckets(&self) -> Vec<metrics::DetectionBucket> {
        let settle = 2 * self.config.params.view_len as u64;
        let mut events: Vec<(&DescriptorKey, &CloneEvent)> = self
            .clones
            .iter()
            .filter(|(_, e)| {
                let honest = e.recipients.iter().filter(|r| !self.roster.contains(r)).count();
                honest >= 2 && e.cycle + settle <= self.cycle
            })
            .collect();
        events.sort_by_key(|(k, _)| **k);
        metrics::detection_ratio(events.into_iter().map(|(k, e)| (e.age, self.detected_clones.contains(k))))
    }

    fn snapshot(&self, c: u64) -> CycleSnapshot {
        let correct: Vec<&Peer> = self.peers.iter().filter(|p| p.alive && p.is_correct()).collect();
        let views = || correct.iter().map(|p| p.view());
        let (bad, links) = metrics::malicious_links(views(), &self.roster);
        let dead = views()
            .flat_map(|v| v.iter())
            .filter(|e| self.index.get(&e.creator()).map_or(true, |&i| !self.peers[i].alive))
            .count();

        let alive: Vec<usize> = (0..self.peers.len()).filter(|&i| self.peers[i].alive).collect();
        let mut deg = vec![0u64; self.peers.len()];
        let mut edges = Vec::new();
        let mut pos = vec![usize::MAX; self.peers.len()];
        for (k, &i) in alive.iter().enumerate() {
            pos[i] = k;
        }
        for &i in &alive {
            for e in self.peers[i].view().iter() {
                if let Some(&t) = self.index.get(&e.creator()) {
                    deg[t] += 1;
                    if pos[t] != usize::MAX {
                        edges.push((pos[i], pos[t]));
                    }
                }
            }
        }
        let alive_deg: Vec<u64> = alive.iter().map(|&i| deg[i]).collect();
        let (indegree_mean, indegree_std) = metrics::mean_std(&alive_deg);

        let (mut blacklisted, mut blacklisted_any) = (0, 0);
        if self.config.mode == Mode::Secure && !correct.is_empty() {
            for m in self.pool.roster() {
                let n = correct
                    .iter()
                    .filter(|p| p.secure_state().is_some_and(|s| s.blacklist.contains(m)))
                    .count();
                blacklisted += usize::from(n == correct.len());
                blacklisted_any += usize::from(n > 0);
            }
        }
        let completed = self.clones.values().filter(|e| e.recipients.len() >= 2).count() as u64;
        CycleSnapshot {
            cycle: c,
            malicious_link_fraction: if links == 0 { 0.0 } else { bad as f64 / links as f64 },
            nonswappable_fraction: metrics::nonswappable_fraction(views()),
            eclipsed: metrics::eclipsed_count(views(), &self.roster),
            blacklisted,
            indegree_mean,
            indegree_std,
            blacklisted_any,
            alive_correct: correct.len(),
            alive_malicious: alive.len() - correct.len(),
            view_occupancy: if correct.is_empty() { 0.0 } else { links as f64 / correct.len() as f64 },
            dead_link_fraction: if links == 0 { 0.0 } else { dead as f64 / links as f64 },
            components: metrics::component_count(alive.len(), edges),
            exchanges: self.counters.exchanges,
            rejected_exchanges: self.counters.rejected,
            proofs_generated: self.counters.proofs_generated,
            false_convictions: self.counters.false_convictions,
            clones_completed: completed,
            clones_detected: self.detected_clones.len() as u64,
            mean_redeemed_chain_len: (self.counters.chain_count > 0)
                .then(|| self.counters.chain_sum as f64 / self.counters.chain_count as f64),
            indegree_histogram: metrics::indegree_distribution(&alive_deg),
        }
    }
}

#[cfg(test)]
mod tests;
