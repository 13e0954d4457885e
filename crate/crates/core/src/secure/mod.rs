//! The SecureCyclon correct-node state machine.

mod cache;
mod exchange;
mod proof;

pub use cache::{frequency_check, ownership_check, RedemptionCache, SampleCache};
pub use exchange::{
    run_exchange, Accept, Batch, ExchangeReport, ExchangeSession, Outcome, Party, Redemption, RejectReason, Role,
    Step, Transfer,
};
pub use proof::{Blacklist, ViolationKind, ViolationProof};

use std::collections::VecDeque;

use rand::Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::descriptor::{chain_relation, Address, ChainRelation, Descriptor, DescriptorKey};
use crate::identity::{Clock, KeyPair, NodeId, SignatureScheme};
use crate::view::{View, ViewEntry};

/// Protocol knobs shared by every node of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecureConfig {
    pub view_len: usize,
    pub swap_len: usize,
    pub period_ms: u64,
    pub titfortat: bool,
    /// Redemption cache size `r`.
    pub redemption_cache: usize,
    /// Cycles a redeemed descriptor stays in the redemption cache.
    pub redemption_ttl: u64,
    /// Cycles a sample survives without being refreshed; `None` never expires.
    pub sample_ttl: Option<u64>,
    /// Largest accepted |timestamp - now| for descriptors handed over by their creator.
    pub max_fresh_skew_ms: u64,
    /// Proofs piggybacked on each gossip message.
    pub proof_piggyback: usize,
    /// Transfers allowed per side when the exchange redeems a non-swappable link.
    pub nonswap_swap_cap: usize,
    /// When false, violations are detected and reported but nobody is blacklisted.
    pub conviction: bool,
}

impl Default for SecureConfig {
    fn default() -> Self {
        SecureConfig::for_params(20, 3, 5, 10_000)
    }
}

impl SecureConfig {
    pub fn for_params(view_len: usize, swap_len: usize, redemption_cache: usize, period_ms: u64) -> Self {
        SecureConfig {
            view_len,
            swap_len,
            period_ms,
            titfortat: true,
            redemption_cache,
            redemption_ttl: 6,
            sample_ttl: Some(2 * view_len as u64),
            max_fresh_skew_ms: 2 * period_ms,
            proof_piggyback: 16,
            nonswap_swap_cap: swap_len,
            conviction: true,
        }
    }
}

/// What is shared by every node during one cycle.
pub struct Env<'a> {
    pub scheme: &'a dyn SignatureScheme,
    pub config: &'a SecureConfig,
    pub cycle: u64,
}

/// How a descriptor reached the node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Context {
    /// Handed over with ownership.
    Owned,
    /// A copy shown for conflict detection only.
    Sample,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admission {
    Accepted,
    Rejected(RejectReason),
    Violation(ViolationProof),
}

/// Which security duties a node performs. Correct nodes do all of them;
/// colluding nodes switch them off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Duties {
    pub checks: bool,
    pub proofs: bool,
}

impl Duties {
    pub const CORRECT: Duties = Duties { checks: true, proofs: true };
    pub const NONE: Duties = Duties { checks: false, proofs: false };
}

/// A descriptor queued to be handed out ahead of regular view entries,
/// possibly more than once.
#[derive(Clone, Debug)]
pub struct Pending {
    pub entry: ViewEntry,
    pub copies_left: u32,
    pub sent_to: Vec<NodeId>,
}

/// One hand-out of a [`Pending`] descriptor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingSend {
    pub key: DescriptorKey,
    pub age: u32,
    pub to: NodeId,
}

#[derive(Default)]
struct NonSwapBook {
    redeemed: FxHashSet<u64>,
    last_cycle: Option<u64>,
}

/// Full per-node protocol state.
pub struct NodeState {
    keys: KeyPair,
    address: Address,
    clock: Clock,
    duties: Duties,
    pub view: View,
    pub samples: SampleCache,
    pub redemptions: RedemptionCache,
    pub blacklist: Blacklist,
    known_proofs: Vec<ViolationProof>,
    nonswap: NonSwapBook,
    redeemed_own: FxHashSet<u64>,
    outbox: Vec<ViolationProof>,
    detections: Vec<ViolationProof>,
    pending: VecDeque<Pending>,
    pending_log: Vec<PendingSend>,
}

impl NodeState {
    pub fn new(keys: KeyPair, address: Address, clock: Clock, config: &SecureConfig) -> Self {
        let id = keys.node_id();
        NodeState {
            keys,
            address,
            clock,
            duties: Duties::CORRECT,
            view: View::new(id, config.view_len),
            samples: SampleCache::new(config.sample_ttl),
            redemptions: RedemptionCache::new(config.redemption_cache, config.redemption_ttl),
            blacklist: Blacklist::default(),
            known_proofs: Vec::new(),
            nonswap: NonSwapBook::default(),
            redeemed_own: FxHashSet::default(),
            outbox: Vec::new(),
            detections: Vec::new(),
            pending: VecDeque::new(),
            pending_log: Vec::new(),
        }
    }

    pub fn with_duties(mut self, duties: Duties) -> Self {
        self.duties = duties;
        self
    }

    pub fn id(&self) -> NodeId {
        self.keys.node_id()
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn duties(&self) -> Duties {
        self.duties
    }

    pub fn set_duties(&mut self, duties: Duties) {
        self.duties = duties;
    }

    /// Queues `entry` to be transferred `copies` times, each time to a
    /// different partner, before any regular view entry.
    pub fn queue_pending(&mut self, entry: ViewEntry, copies: u32) {
        self.pending.push_back(Pending {
            entry,
            copies_left: copies,
            sent_to: Vec::new(),
        });
    }

    pub fn pending(&self) -> impl Iterator<Item = &Pending> {
        self.pending.iter()
    }

    pub fn take_pending_log(&mut self) -> Vec<PendingSend> {
        std::mem::take(&mut self.pending_log)
    }

    /// A new descriptor of this node, owned by this node.
    pub fn fresh_descriptor(&self, cycle: u64) -> Descriptor {
        self.fresh_descriptor_at(self.clock.now(cycle))
    }

    pub fn fresh_descriptor_at(&self, ts: u64) -> Descriptor {
        Descriptor::create(&self.keys, self.address, ts)
    }

    /// Start-of-cycle housekeeping.
    pub fn tick(&mut self, cycle: u64) {
        self.samples.expire(cycle);
        self.redemptions.expire(cycle);
        self.view.age();
    }

    /// Runs the admission checks on a received descriptor. On success it is
    /// cached as a sample; inserting owned descriptors is up to the caller.
    pub fn admit(&mut self, d: &Descriptor, ctx: Context, env: &Env) -> Admission {
        if d.transfer_count() == 0 || !d.verify_chain(env.scheme) {
            return Admission::Rejected(RejectReason::InvalidChain);
        }
        if self.blacklist.contains(&d.creator()) {
            return Admission::Rejected(RejectReason::Blacklisted);
        }
        if !self.duties.checks {
            return Admission::Accepted;
        }
        if ctx == Context::Owned && d.transfer_count() == 1 {
            let now = self.clock.now(env.cycle);
            if d.timestamp().abs_diff(now) > env.config.max_fresh_skew_ms {
                return Admission::Rejected(RejectReason::StaleTimestamp);
            }
        }
        let found = frequency_check(&self.samples, d, env.config.period_ms)
            .or_else(|| ownership_check(&mut self.samples, d, env.cycle));
        match found {
            Some(proof) => {
                self.detections.push(proof.clone());
                self.convict(proof.clone(), env);
                Admission::Violation(proof)
            }
            None => Admission::Accepted,
        }
    }

    /// Validates a proof received from elsewhere; returns whether it led to a
    /// new conviction.
    pub fn receive_proof(&mut self, proof: ViolationProof, env: &Env) -> bool {
        if !self.duties.proofs || self.blacklist.contains(&proof.accused) {
            return false;
        }
        if !proof.validate(env.scheme, env.config.period_ms) {
            return false;
        }
        self.convict(proof, env)
    }

    fn convict(&mut self, proof: ViolationProof, env: &Env) -> bool {
        if !env.config.conviction || !self.duties.proofs || proof.accused == self.id() {
            return false;
        }
        let accused = proof.accused;
        if !self.blacklist.insert(proof.clone()) {
            return false;
        }
        self.known_proofs.push(proof.clone());
        self.outbox.push(proof);
        self.apply_blacklist(&accused);
        true
    }

    /// Drops every view entry pointing at `accused`.
    pub fn apply_blacklist(&mut self, accused: &NodeId) -> usize {
        self.view.remove_where(|e| e.creator() == *accused)
    }

    /// Neighbours a new proof is flooded to.
    pub fn flood_targets(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.view.iter().map(|e| e.creator()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Proofs this node convicted on since the last call, to be flooded.
    pub fn take_outbox(&mut self) -> Vec<ViolationProof> {
        std::mem::take(&mut self.outbox)
    }

    /// Proofs produced by this node's own checks since the last call.
    pub fn take_detections(&mut self) -> Vec<ViolationProof> {
        std::mem::take(&mut self.detections)
    }

    pub fn known_proofs(&self) -> &[ViolationProof] {
        &self.known_proofs
    }

    /// The most recent proofs, as piggybacked on gossip.
    pub fn piggyback(&self, limit: usize) -> Vec<ViolationProof> {
        let from = self.known_proofs.len().saturating_sub(limit);
        self.known_proofs[from..].to_vec()
    }

    /// Swappable view entries plus the redemption cache.
    pub fn sample_set(&self) -> Vec<Descriptor> {
        self.view
            .iter()
            .filter(|e| e.swappable)
            .map(|e| e.descriptor.clone())
            .chain(self.redemptions.iter().cloned())
            .collect()
    }

    /// Creator-side bookkeeping for redemptions of non-swappable links:
    /// once per descriptor ever, and at most one per cycle.
    pub fn check_nonswap_redemption(&mut self, key: &DescriptorKey, cycle: u64) -> bool {
        if self.nonswap.redeemed.contains(&key.timestamp) || self.nonswap.last_cycle == Some(cycle) {
            return false;
        }
        self.nonswap.redeemed.insert(key.timestamp);
        self.nonswap.last_cycle = Some(cycle);
        true
    }

    /// Fills empty view slots with non-swappable copies of descriptors whose
    /// ownership was just given away.
    pub fn mark_nonswappable(&mut self, sent: &[ViewEntry]) -> usize {
        let mut added = 0;
        for e in sent {
            if self.view.is_full() {
                break;
            }
            if self.blacklist.contains(&e.creator()) {
                continue;
            }
            if self.view.insert(ViewEntry::non_swappable(e.descriptor.clone(), e.age)).is_ok() {
                added += 1;
            }
        }
        added
    }

    /// Accepts a descriptor into the view; blacklisted creators are refused.
    pub fn insert_owned(&mut self, entry: ViewEntry) -> bool {
        !self.blacklist.contains(&entry.creator()) && self.view.insert(entry).is_ok()
    }

    /// Validates a redemption of one of this node's own descriptors.
    pub(crate) fn check_redemption(&mut self, msg: &Redemption, env: &Env) -> Result<(), Accept> {
        let d = &msg.redeemed;
        if self.blacklist.contains(&msg.initiator) {
            return Err(Accept::Rejected(RejectReason::Blacklisted));
        }
        if !d.verify_chain(env.scheme) {
            return Err(Accept::Rejected(RejectReason::InvalidChain));
        }
        if d.creator() != self.id() {
            return Err(Accept::Rejected(RejectReason::NotCreator));
        }
        if d.transfer_count() == 0 || d.current_owner() != msg.initiator {
            return Err(Accept::Rejected(RejectReason::NotOwner));
        }
        if self.duties.checks {
            if let Some(cached) = self.samples.get(&d.key()) {
                match chain_relation(cached, d) {
                    Ok(ChainRelation::Conflict { violator }) => {
                        let proof = ViolationProof::cloning(cached.clone(), d.clone(), violator);
                        self.detections.push(proof.clone());
                        self.convict(proof.clone(), env);
                        return Err(Accept::Violation(proof));
                    }
                    // A swappable link must be the latest version of the descriptor.
                    Ok(ChainRelation::Extends) if !msg.nonswappable => {
                        return Err(Accept::Rejected(RejectReason::StaleCopy));
                    }
                    _ => {}
                }
            }
            self.samples.record(d, env.cycle);
        }
        if msg.nonswappable {
            if !self.check_nonswap_redemption(&d.key(), env.cycle) {
                return Err(Accept::Rejected(RejectReason::NonSwappableLimit));
            }
        } else if !self.redeemed_own.insert(d.timestamp()) {
            return Err(Accept::Rejected(RejectReason::AlreadyRedeemed));
        }
        Ok(())
    }

    pub(crate) fn pick_transfers<R: Rng + ?Sized>(
        &mut self,
        count: usize,
        partner: NodeId,
        env: &Env,
        rng: &mut R,
    ) -> (Vec<ViewEntry>, Vec<Transfer>) {
        let mut picked = Vec::new();
        let mut i = 0;
        while picked.len() < count && i < self.pending.len() {
            let p = &mut self.pending[i];
            if p.entry.creator() == partner || p.sent_to.contains(&partner) {
                i += 1;
                continue;
            }
            p.sent_to.push(partner);
            p.copies_left -= 1;
            self.pending_log.push(PendingSend {
                key: p.entry.descriptor.key(),
                age: p.entry.age,
                to: partner,
            });
            picked.push(p.entry.clone());
            if p.copies_left == 0 {
                self.pending.remove(i);
            } else {
                i += 1;
            }
        }
        let rest = count - picked.len();
        picked.extend(self.view.take_random(rest, Some(partner), rng));
        let mut transfers = Vec::with_capacity(picked.len());
        for e in &picked {
            let d = e
                .descriptor
                .transfer(&self.keys, partner, env.scheme)
                .expect("swappable entries are owned by the view owner");
            transfers.push(Transfer { descriptor: d, age: e.age });
        }
        (picked, transfers)
    }
}
