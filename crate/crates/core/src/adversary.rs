//! Colluding malicious nodes and the attacks they run.

use std::cell::RefCell;
use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::descriptor::Descriptor;
use crate::identity::{KeyPair, NodeId, SignatureScheme};
use crate::secure::{
    Accept, Batch, Duties, Env, ExchangeSession, NodeState, Party, Redemption, Role, Step, Transfer,
};
use crate::view::ViewEntry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    /// Flood the overlay with links to party members.
    HubAttack,
    /// Take ownerships and give nothing back.
    LinkDepletion,
    /// Hand a party-created descriptor to two parties once it reaches `age`.
    CloneAtAge { age: u32 },
    /// Create `rate` descriptors of oneself per cycle.
    FrequencySpam { rate: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackPlan {
    pub strategy: Strategy,
    /// Party members behave correctly before this cycle.
    pub start_cycle: u64,
    pub malicious_fraction: f64,
    /// Exact party size; overrides `malicious_fraction` when set.
    pub malicious_count: Option<usize>,
    /// Samples in a hub attacker's fake view; `None` means one view length.
    pub fake_view: Option<usize>,
    /// Whether hub attackers respect tit-for-tat rounds.
    pub honor_titfortat: bool,
    /// Party members on a forged chain before the presenter.
    pub forged_hops: usize,
    /// Cycles a pool descriptor stays usable; `None` means one view length.
    pub pool_window: Option<u64>,
    /// Age attached to planted descriptors; `None` reports their true age.
    pub claimed_age: Option<u32>,
    /// Never show one victim two versions of the same pool descriptor.
    pub victim_consistent: bool,
}

impl Default for AttackPlan {
    fn default() -> Self {
        AttackPlan {
            strategy: Strategy::HubAttack,
            start_cycle: 50,
            malicious_fraction: 0.0,
            malicious_count: None,
            fake_view: None,
            honor_titfortat: true,
            forged_hops: 0,
            pool_window: None,
            claimed_age: None,
            victim_consistent: true,
        }
    }
}

impl AttackPlan {
    pub fn party_size(&self, n: usize) -> usize {
        self.malicious_count
            .unwrap_or_else(|| (self.malicious_fraction * n as f64).round() as usize)
            .min(n)
    }

    pub fn active(&self, cycle: u64) -> bool {
        cycle >= self.start_cycle
    }
}

/// Descriptors recently created by party members, with every member's keys.
pub struct MaliciousPool {
    keys: FxHashMap<NodeId, KeyPair>,
    roster: Vec<NodeId>,
    entries: VecDeque<(Descriptor, u64)>,
    /// Entries evicted so far; entry `i` has sequence number `evicted + i`.
    evicted: u64,
    window: u64,
    /// Sequence numbers of pool entries already shown to each victim.
    shown: RefCell<FxHashMap<NodeId, FxHashSet<u64>>>,
}

impl MaliciousPool {
    pub fn new(members: impl IntoIterator<Item = KeyPair>, window: u64) -> Self {
        let mut keys = FxHashMap::default();
        let mut roster = Vec::new();
        for k in members {
            roster.push(k.node_id());
            keys.insert(k.node_id(), k);
        }
        roster.sort_unstable();
        MaliciousPool {
            keys,
            roster,
            entries: VecDeque::new(),
            evicted: 0,
            window,
            shown: RefCell::default(),
        }
    }

    pub fn is_member(&self, id: &NodeId) -> bool {
        self.keys.contains_key(id)
    }

    pub fn roster(&self) -> &[NodeId] {
        &self.roster
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &Descriptor> {
        self.entries.iter().map(|(d, _)| d)
    }

    pub fn add(&mut self, d: Descriptor, cycle: u64) {
        debug_assert!(self.is_member(&d.creator()));
        self.entries.push_back((d, cycle));
    }

    /// Drops descriptors older than the recency window.
    pub fn evict(&mut self, now: u64) {
        while matches!(self.entries.front(), Some((_, c)) if c + self.window < now) {
            self.entries.pop_front();
            self.evicted += 1;
        }
    }

    /// `count` pool descriptors picked uniformly without replacement,
    /// skipping those created by `exclude`.
    pub fn hub_attack_view<R: Rng + ?Sized>(&self, count: usize, exclude: Option<NodeId>, rng: &mut R) -> Vec<Descriptor> {
        let eligible: Vec<&Descriptor> = self
            .entries
            .iter()
            .map(|(d, _)| d)
            .filter(|d| Some(d.creator()) != exclude)
            .collect();
        let k = count.min(eligible.len());
        sample(rng, eligible.len(), k).into_iter().map(|i| eligible[i].clone()).collect()
    }

    /// Like [`MaliciousPool::hub_attack_view`], each pick paired with the
    /// number of cycles since it entered the pool.
    pub fn hub_attack_view_aged<R: Rng + ?Sized>(
        &self,
        count: usize,
        exclude: Option<NodeId>,
        now: u64,
        rng: &mut R,
    ) -> Vec<(Descriptor, u32)> {
        let eligible: Vec<&(Descriptor, u64)> = self
            .entries
            .iter()
            .filter(|(d, _)| Some(d.creator()) != exclude)
            .collect();
        let k = count.min(eligible.len());
        sample(rng, eligible.len(), k)
            .into_iter()
            .map(|i| {
                let (d, c) = eligible[i];
                (d.clone(), now.saturating_sub(*c) as u32)
            })
            .collect()
    }

    /// Like [`MaliciousPool::hub_attack_view_aged`], but never returns an
    /// entry already handed to `victim` by any member.
    pub fn hub_attack_view_for<R: Rng + ?Sized>(
        &self,
        victim: NodeId,
        count: usize,
        exclude: Option<NodeId>,
        now: u64,
        rng: &mut R,
    ) -> Vec<(Descriptor, u32)> {
        let mut shown = self.shown.borrow_mut();
        let seen = shown.entry(victim).or_default();
        if seen.len() > 2 * self.entries.len() {
            seen.retain(|&q| q >= self.evicted);
        }
        let eligible: Vec<(u64, &(Descriptor, u64))> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (self.evicted + i as u64, e))
            .filter(|(q, (d, _))| Some(d.creator()) != exclude && !seen.contains(q))
            .collect();
        let k = count.min(eligible.len());
        sample(rng, eligible.len(), k)
            .into_iter()
            .map(|i| {
                let (q, (d, c)) = eligible[i];
                seen.insert(q);
                (d.clone(), now.saturating_sub(*c) as u32)
            })
            .collect()
    }

    /// Re-signs `d` from its creator through `hops` random members to `presenter`.
    pub fn forge<R: Rng + ?Sized>(
        &self,
        d: &Descriptor,
        presenter: NodeId,
        hops: usize,
        scheme: &dyn SignatureScheme,
        rng: &mut R,
    ) -> Descriptor {
        let mut out = d.clone();
        for _ in 0..hops {
            let owner = out.current_owner();
            let next = loop {
                let c = self.roster[rng.gen_range(0..self.roster.len())];
                if c != owner && c != presenter || self.roster.len() <= 2 {
                    break c;
                }
            };
            if next == owner {
                break;
            }
            out = out.transfer(&self.keys[&owner], next, scheme).expect("party holds the owner key");
        }
        let owner = out.current_owner();
        if owner != presenter {
            out = out.transfer(&self.keys[&owner], presenter, scheme).expect("party holds the owner key");
        }
        out
    }
}

/// A record of one cloned descriptor and where its copies went.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CloneEvent {
    pub cloner: NodeId,
    pub age: u32,
    pub cycle: u64,
    pub recipients: Vec<NodeId>,
}

/// A party member: a node state plus the attack it runs once active.
pub struct MaliciousNode {
    pub state: NodeState,
    pub strategy: Strategy,
    active: bool,
    spam_index: u32,
}

impl MaliciousNode {
    pub fn new(state: NodeState, strategy: Strategy) -> Self {
        MaliciousNode {
            state,
            strategy,
            active: false,
            spam_index: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.state.id()
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Switches to attack mode: security duties are dropped for good.
    pub fn activate(&mut self) {
        self.active = true;
        self.state.set_duties(Duties::NONE);
    }

    /// Exchanges this node opens in `cycle`.
    pub fn initiations(&self) -> usize {
        match self.strategy {
            Strategy::FrequencySpam { rate } if self.active => rate as usize,
            _ => 1,
        }
    }

    /// Start-of-cycle housekeeping; queues clones when the plan calls for it.
    pub fn tick(&mut self, cycle: u64, pool: &MaliciousPool) {
        if let (true, Strategy::CloneAtAge { age }) = (self.active, self.strategy) {
            clone_at_age(&mut self.state, age, pool);
        }
        self.state.tick(cycle);
        self.spam_index = 0;
    }

    /// Binds the node to the shared pool for one exchange.
    pub fn armed<'a>(&'a mut self, pool: &'a MaliciousPool, plan: &'a AttackPlan) -> Armed<'a> {
        Armed { node: self, pool, plan }
    }
}

/// Moves every swappable party-created entry of exactly `age` out of the
/// view and queues it to be handed to two different parties.
pub fn clone_at_age(state: &mut NodeState, age: u32, pool: &MaliciousPool) -> usize {
    let mut picked = Vec::new();
    state.view.remove_where(|e| {
        let hit = e.swappable && e.age == age && pool.is_member(&e.creator());
        if hit {
            picked.push(e.clone());
        }
        hit
    });
    let n = picked.len();
    for e in picked {
        state.queue_pending(e, 2);
    }
    n
}

/// Empty reply of a depleting node.
pub fn link_depletion_response() -> Batch {
    Batch::default()
}

/// A party member bound to the shared pool and plan for one exchange.
pub struct Armed<'a> {
    node: &'a mut MaliciousNode,
    pool: &'a MaliciousPool,
    plan: &'a AttackPlan,
}

impl Armed<'_> {
    fn attacking(&self) -> Option<Strategy> {
        self.node.active.then_some(self.node.strategy)
    }

    fn mirror_titfortat(&self, env: &Env) -> bool {
        self.plan.honor_titfortat && env.config.titfortat
    }

    /// Oldest link to a node outside the party; party links are dropped.
    fn select_outsider(&mut self) -> Option<ViewEntry> {
        loop {
            let e = self.node.state.view.select_partner().ok()?;
            if !self.pool.is_member(&e.creator()) {
                return Some(e);
            }
        }
    }

    fn forged_transfers(&self, count: usize, victim: NodeId, env: &Env, rng: &mut dyn RngCore) -> Vec<Transfer> {
        let me = self.node.id();
        let picks = if self.plan.victim_consistent {
            self.pool.hub_attack_view_for(victim, count, Some(me), env.cycle, rng)
        } else {
            self.pool.hub_attack_view_aged(count, Some(me), env.cycle, rng)
        };
        if picks.is_empty() {
            let own = self.node.state.fresh_descriptor(env.cycle);
            let d = own.transfer(self.node.state.keys(), victim, env.scheme).expect("own descriptor");
            return vec![Transfer { descriptor: d, age: 0 }];
        }
        picks
            .iter()
            .map(|(d, age)| {
                let held = self.pool.forge(d, me, self.plan.forged_hops, env.scheme, rng);
                let d = held.transfer(self.node.state.keys(), victim, env.scheme).expect("forged to presenter");
                Transfer {
                    descriptor: d,
                    age: self.plan.claimed_age.unwrap_or(*age),
                }
            })
            .collect()
    }

    fn fake_view(&self, victim: NodeId, env: &Env, rng: &mut dyn RngCore) -> Vec<Descriptor> {
        let me = self.node.id();
        let count = self.plan.fake_view.unwrap_or(env.config.view_len);
        let picks = if self.plan.victim_consistent {
            self.pool
                .hub_attack_view_for(victim, count, Some(me), env.cycle, rng)
                .into_iter()
                .map(|(d, _)| d)
                .collect()
        } else {
            self.pool.hub_attack_view(count, Some(me), rng)
        };
        picks
            .iter()
            .map(|d| self.pool.forge(d, me, self.plan.forged_hops, env.scheme, rng))
            .collect()
    }

    /// Keeps whatever was handed over, without any checks.
    fn pocket(&mut self, session: &mut ExchangeSession, transfers: Vec<Transfer>) {
        let me = self.node.id();
        for t in transfers {
            if t.descriptor.current_owner() == me && session.received_count < session.swap_cap {
                session.received.push(ViewEntry::new(t.descriptor, t.age));
                session.received_count += 1;
            }
        }
    }
}

impl Party for Armed<'_> {
    fn id(&self) -> NodeId {
        self.node.id()
    }

    fn initiate(&mut self, env: &Env, rng: &mut dyn RngCore) -> Option<(ExchangeSession, Redemption)> {
        let s = env.config.swap_len;
        match self.attacking() {
            None | Some(Strategy::CloneAtAge { .. }) | Some(Strategy::LinkDepletion) => {
                self.node.state.initiate(env, rng)
            }
            Some(Strategy::FrequencySpam { rate }) => {
                let k = self.node.spam_index;
                self.node.spam_index += 1;
                let ts = self.node.state.clock().now(env.cycle) + k as u64 * env.config.period_ms / rate.max(1) as u64;
                self.node.state.initiate_at(ts, env, rng)
            }
            Some(Strategy::HubAttack) => {
                let entry = self.select_outsider()?;
                let partner = entry.creator();
                let tft = self.mirror_titfortat(env);
                let n = if tft { 1 } else { s };
                let transfers = self.forged_transfers(n, partner, env, rng);
                let mut session = ExchangeSession::new(Role::Initiator, partner, s, tft);
                session.sent_count = transfers.len();
                let msg = Redemption {
                    initiator: self.node.id(),
                    redeemed: entry.descriptor,
                    nonswappable: !entry.swappable,
                    transfers,
                    samples: self.fake_view(partner, env, rng),
                    proofs: Vec::new(),
                };
                Some((session, msg))
            }
        }
    }

    fn accept(&mut self, msg: Redemption, env: &Env, rng: &mut dyn RngCore) -> Accept {
        let s = env.config.swap_len;
        match self.attacking() {
            None | Some(Strategy::CloneAtAge { .. }) | Some(Strategy::FrequencySpam { .. }) => {
                self.node.state.accept(msg, env, rng)
            }
            Some(Strategy::LinkDepletion) => {
                let mut session = ExchangeSession::new(Role::Responder, msg.initiator, s, env.config.titfortat);
                self.pocket(&mut session, msg.transfers);
                session.closed = true;
                Accept::Accepted {
                    session,
                    reply: link_depletion_response(),
                }
            }
            Some(Strategy::HubAttack) => {
                let tft = self.mirror_titfortat(env);
                let mut session = ExchangeSession::new(Role::Responder, msg.initiator, s, tft);
                self.pocket(&mut session, msg.transfers);
                let n = if tft { session.received_count.min(s) } else { s };
                let transfers = if n == 0 {
                    Vec::new()
                } else {
                    self.forged_transfers(n, msg.initiator, env, rng)
                };
                session.sent_count = transfers.len();
                let reply = Batch {
                    transfers,
                    samples: self.fake_view(msg.initiator, env, rng),
                    proofs: Vec::new(),
                };
                Accept::Accepted { session, reply }
            }
        }
    }

    fn step(
        &mut self,
        session: &mut ExchangeSession,
        incoming: Option<Batch>,
        env: &Env,
        rng: &mut dyn RngCore,
    ) -> Step {
        match self.attacking() {
            None | Some(Strategy::CloneAtAge { .. }) | Some(Strategy::FrequencySpam { .. }) => {
                self.node.state.step(session, incoming, env, rng)
            }
            Some(Strategy::LinkDepletion) if session.role == Role::Initiator => {
                self.node.state.step(session, incoming, env, rng)
            }
            Some(Strategy::LinkDepletion) => {
                if let Some(b) = incoming {
                    self.pocket(session, b.transfers);
                }
                session.closed = true;
                Step::Done
            }
            Some(Strategy::HubAttack) => {
                let Some(b) = incoming else {
                    session.closed = true;
                    return Step::Done;
                };
                let before = session.received_count;
                self.pocket(session, b.transfers);
                if !session.titfortat || session.closed {
                    session.closed = true;
                    return Step::Done;
                }
                let count = match session.role {
                    Role::Initiator => usize::from(
                        session.received_count > before
                            && session.received_count >= session.sent_count
                            && session.sent_count < session.swap_cap,
                    ),
                    Role::Responder => session.received_count.min(session.swap_cap).saturating_sub(session.sent_count),
                };
                if count == 0 {
                    session.closed = true;
                    return Step::Done;
                }
                let transfers = self.forged_transfers(count, session.partner, env, rng);
                session.sent_count += transfers.len();
                Step::Send(Batch {
                    transfers,
                    ..Batch::default()
                })
            }
        }
    }

    fn finish(&mut self, session: ExchangeSession, env: &Env) {
        match self.attacking() {
            Some(Strategy::LinkDepletion) if session.role == Role::Initiator => self.node.state.finish(session, env),
            Some(Strategy::LinkDepletion) | Some(Strategy::HubAttack) => {
                for e in session.received {
                    self.node.state.insert_owned(e);
                }
            }
            _ => self.node.state.finish(session, env),
        }
    }
}

/// Extends a set of clone records with the hand-outs a cloner just made.
pub fn record_clone_sends(
    events: &mut FxHashMap<crate::descriptor::DescriptorKey, CloneEvent>,
    cloner: NodeId,
    cycle: u64,
    sends: Vec<crate::secure::PendingSend>,
) {
    for s in sends {
        events
            .entry(s.key)
            .or_insert_with(|| CloneEvent {
                cloner,
                age: s.age,
                cycle,
                recipients: Vec::new(),
            })
            .recipients
            .push(s.to);
    }
}

/// Ids of every party member, for the instrumenter.
pub fn roster_set(pool: &MaliciousPool) -> FxHashSet<NodeId> {
    pool.roster().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::Address;
    use crate::identity::{Clock, KeyedHashScheme};
    use crate::secure::{run_exchange, Outcome, SecureConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn party(n: usize) -> (KeyedHashScheme, Vec<KeyPair>) {
        let s = KeyedHashScheme::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = (0..n).map(|_| s.generate(&mut rng)).collect();
        (s, k)
    }

    fn filled_pool(keys: &[KeyPair], per_member: u64) -> MaliciousPool {
        let mut pool = MaliciousPool::new(keys.iter().cloned(), 20);
        for c in 0..per_member {
            for k in keys {
                pool.add(Descriptor::create(k, Address::new(0, 0), c * 10_000), c);
            }
        }
        pool
    }

    #[test]
    fn hub_view_draws_from_pool() {
        let (_, keys) = party(4);
        let pool = filled_pool(&keys, 10);
        assert_eq!(pool.len(), 40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = pool.hub_attack_view(3, None, &mut rng);
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|d| pool.is_member(&d.creator())));
        let mut keys_seen: Vec<_> = v.iter().map(|d| d.key()).collect();
        keys_seen.dedup();
        assert_eq!(keys_seen.len(), 3);
        let own = keys[0].node_id();
        assert!(pool.hub_attack_view(40, Some(own), &mut rng).iter().all(|d| d.creator() != own));
    }

    #[test]
    fn pool_evicts_after_window() {
        let (_, keys) = party(2);
        let mut pool = filled_pool(&keys, 30);
        pool.evict(30);
        assert_eq!(pool.len(), 40);
        assert!(pool.descriptors().all(|d| d.timestamp() >= 10 * 10_000));
    }

    #[test]
    fn forged_chains_verify() {
        let (s, keys) = party(5);
        let pool = filled_pool(&keys, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let presenter = keys[4].node_id();
        for d in pool.descriptors() {
            for hops in 0..3 {
                let f = pool.forge(d, presenter, hops, &s, &mut rng);
                assert!(f.verify_chain(&s));
                if d.creator() != presenter {
                    assert_eq!(f.current_owner(), presenter);
                }
                assert!(f.transfer_count() <= hops + 1);
            }
        }
    }

    #[test]
    fn clone_queue_takes_exact_age_only() {
        let (s, keys) = party(6);
        let cfg = SecureConfig::for_params(8, 3, 5, 10_000);
        let pool = MaliciousPool::new(keys[..3].iter().cloned(), 20);
        let mut st = NodeState::new(keys[0].clone(), Address::new(0, 0), Clock::new(10_000, 0), &cfg);
        for (i, k) in keys[1..].iter().enumerate() {
            let d = Descriptor::create(k, Address::new(0, 0), 0)
                .transfer(k, keys[0].node_id(), &s)
                .unwrap();
            st.view.insert(ViewEntry::new(d, 5 + (i as u32 % 2))).unwrap();
        }
        // keys[1] (age 5) and keys[2] (age 6) are party members.
        assert_eq!(clone_at_age(&mut st, 6, &pool), 1);
        assert_eq!(st.view.len(), 4);
        let p: Vec<_> = st.pending().collect();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].entry.creator(), keys[2].node_id());
        assert_eq!(p[0].copies_left, 2);
    }

    fn depletion_pair(titfortat: bool) -> (KeyedHashScheme, SecureConfig, NodeState, MaliciousNode, MaliciousPool) {
        let (s, keys) = party(6);
        let mut cfg = SecureConfig::for_params(8, 3, 5, 10_000);
        cfg.titfortat = titfortat;
        let mk = |k: &KeyPair| NodeState::new(k.clone(), Address::new(0, 0), Clock::new(10_000, 0), &cfg);
        let mut a = mk(&keys[0]);
        let mut m = MaliciousNode::new(mk(&keys[1]), Strategy::LinkDepletion);
        for (i, k) in keys[1..].iter().enumerate() {
            let d = Descriptor::create(k, Address::new(0, 0), 0).transfer(k, keys[0].node_id(), &s).unwrap();
            a.view.insert(ViewEntry::new(d, if i == 0 { 9 } else { 1 })).unwrap();
        }
        let d = Descriptor::create(&keys[0], Address::new(0, 0), 0)
            .transfer(&keys[0], keys[1].node_id(), &s)
            .unwrap();
        m.state.view.insert(ViewEntry::new(d, 9)).unwrap();
        m.activate();
        let pool = MaliciousPool::new(keys[1..2].iter().cloned(), 20);
        (s, cfg, a, m, pool)
    }

    #[test]
    fn depletion_drains_only_when_contacted() {
        let plan = AttackPlan {
            strategy: Strategy::LinkDepletion,
            ..AttackPlan::default()
        };
        for titfortat in [false, true] {
            let (s, cfg, mut a, mut m, pool) = depletion_pair(titfortat);
            let env = Env {
                scheme: &s,
                config: &cfg,
                cycle: 1,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let opened = a.initiate(&env, &mut rng).unwrap();
            assert_eq!(opened.0.partner, m.id());
            let mut armed = m.armed(&pool, &plan);
            let r = run_exchange(&mut a, &mut armed, opened, &env, &mut rng, &mut |_| true);
            assert_eq!(r.responder_sent, 0);
            assert_eq!(r.initiator_sent, if titfortat { 1 } else { 3 });

            let (s, cfg, mut a, mut m, pool) = depletion_pair(titfortat);
            let env = Env {
                scheme: &s,
                config: &cfg,
                cycle: 1,
            };
            let mut armed = m.armed(&pool, &plan);
            let opened = armed.initiate(&env, &mut rng).unwrap();
            let r = run_exchange(&mut armed, &mut a, opened, &env, &mut rng, &mut |_| true);
            assert_eq!(r.outcome, Outcome::Completed);
            assert_eq!(r.responder_received, 1);
            if titfortat {
                assert_eq!(r.responder_sent, 1);
            }
        }
    }

    #[test]
    fn plan_defaults_and_party_size() {
        let plan = AttackPlan {
            malicious_fraction: 0.4,
            ..AttackPlan::default()
        };
        assert_eq!(plan.party_size(1000), 400);
        assert!(!plan.active(49));
        assert!(plan.active(50));
        let exact = AttackPlan {
            malicious_count: Some(20),
            ..plan
        };
        assert_eq!(exact.party_size(1000), 20);
    }
}
