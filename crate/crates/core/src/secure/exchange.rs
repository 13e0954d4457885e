//! Gossip exchanges between two parties, with optional tit-for-tat rounds.

use rand::RngCore;

use crate::descriptor::Descriptor;
use crate::identity::NodeId;
use crate::secure::{Admission, Context, Env, NodeState, ViolationProof};
use crate::view::ViewEntry;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

/// One ownership transfer, with the age the sender claims for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub descriptor: Descriptor,
    pub age: u32,
}

/// Opening message of an exchange.
#[derive(Clone, Debug)]
pub struct Redemption {
    pub initiator: NodeId,
    /// The responder's own descriptor, now owned by the initiator.
    pub redeemed: Descriptor,
    pub nonswappable: bool,
    pub transfers: Vec<Transfer>,
    pub samples: Vec<Descriptor>,
    pub proofs: Vec<ViolationProof>,
}

/// Any later message of an exchange.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub transfers: Vec<Transfer>,
    pub samples: Vec<Descriptor>,
    pub proofs: Vec<ViolationProof>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RejectReason {
    InvalidChain,
    Blacklisted,
    StaleTimestamp,
    NotCreator,
    NotOwner,
    /// A swappable redemption of a version the redeemer already passed on.
    StaleCopy,
    AlreadyRedeemed,
    NonSwappableLimit,
}

/// Per-side bookkeeping of one exchange.
#[derive(Clone, Debug)]
pub struct ExchangeSession {
    pub role: Role,
    pub partner: NodeId,
    /// Most ownership transfers this side sends or accepts.
    pub swap_cap: usize,
    pub titfortat: bool,
    /// Pre-transfer copies of the view entries given away.
    pub sent: Vec<ViewEntry>,
    /// Ownership transfers sent, fresh descriptor included.
    pub sent_count: usize,
    pub received: Vec<ViewEntry>,
    /// Valid ownership transfers received.
    pub received_count: usize,
    pub closed: bool,
}

impl ExchangeSession {
    pub fn new(role: Role, partner: NodeId, swap_cap: usize, titfortat: bool) -> Self {
        ExchangeSession {
            role,
            partner,
            swap_cap,
            titfortat,
            sent: Vec::new(),
            sent_count: 0,
            received: Vec::new(),
            received_count: 0,
            closed: false,
        }
    }

    /// Ownerships given away minus ownerships obtained.
    pub fn net_loss(&self) -> isize {
        self.sent_count as isize - self.received_count as isize
    }
}

pub enum Accept {
    Accepted { session: ExchangeSession, reply: Batch },
    Rejected(RejectReason),
    Violation(ViolationProof),
}

#[derive(Debug)]
pub enum Step {
    Send(Batch),
    Done,
    Violation(ViolationProof),
}

/// Anything able to take part in an exchange.
pub trait Party {
    fn id(&self) -> NodeId;

    /// Starts this cycle's exchange, or `None` if there is nobody to contact.
    fn initiate(&mut self, env: &Env, rng: &mut dyn RngCore) -> Option<(ExchangeSession, Redemption)>;

    fn accept(&mut self, msg: Redemption, env: &Env, rng: &mut dyn RngCore) -> Accept;

    /// Handles the partner's latest message; `None` means it never arrived.
    fn step(&mut self, session: &mut ExchangeSession, incoming: Option<Batch>, env: &Env, rng: &mut dyn RngCore)
        -> Step;

    fn finish(&mut self, session: ExchangeSession, env: &Env);
}

fn previous_owner(d: &Descriptor) -> Option<NodeId> {
    let n = d.transfer_count();
    match n {
        0 => None,
        1 => Some(d.creator()),
        _ => Some(d.chain()[n - 2].new_owner),
    }
}

impl NodeState {
    /// Admits proofs, samples and transfers carried by one message.
    fn absorb(&mut self, session: &mut ExchangeSession, batch: Batch, env: &Env) -> Result<(), ViolationProof> {
        for p in batch.proofs {
            self.receive_proof(p, env);
        }
        for s in &batch.samples {
            if let Admission::Violation(p) = self.admit(s, Context::Sample, env) {
                return Err(p);
            }
        }
        let me = self.id();
        for t in batch.transfers {
            if session.received_count >= session.swap_cap {
                break;
            }
            let d = &t.descriptor;
            if d.current_owner() != me || previous_owner(d) != Some(session.partner) {
                continue;
            }
            match self.admit(d, Context::Owned, env) {
                Admission::Accepted => {
                    session.received.push(ViewEntry::new(t.descriptor, t.age));
                    session.received_count += 1;
                }
                Admission::Rejected(_) => {}
                Admission::Violation(p) => return Err(p),
            }
        }
        Ok(())
    }

    fn proofs_out(&self, env: &Env) -> Vec<ViolationProof> {
        if self.duties().proofs {
            self.piggyback(env.config.proof_piggyback)
        } else {
            Vec::new()
        }
    }

    /// Opens an exchange whose fresh descriptor carries timestamp `ts`.
    pub fn initiate_at(&mut self, ts: u64, env: &Env, rng: &mut dyn RngCore) -> Option<(ExchangeSession, Redemption)> {
        let entry = self.view.select_partner().ok()?;
        let partner = entry.creator();
        self.redemptions.push(entry.descriptor.clone(), env.cycle);
        let s = env.config.swap_len;
        let cap = if entry.swappable { s } else { env.config.nonswap_swap_cap.min(s) };
        let mut session = ExchangeSession::new(Role::Initiator, partner, cap, env.config.titfortat);
        let fresh = self
            .fresh_descriptor_at(ts)
            .transfer(self.keys(), partner, env.scheme)
            .expect("creator owns its fresh descriptor");
        let mut transfers = vec![Transfer { descriptor: fresh, age: 0 }];
        session.sent_count = 1;
        if !session.titfortat && cap > 1 {
            let (picked, more) = self.pick_transfers(cap - 1, partner, env, rng);
            session.sent_count += more.len();
            session.sent.extend(picked);
            transfers.extend(more);
        }
        let msg = Redemption {
            initiator: self.id(),
            redeemed: entry.descriptor,
            nonswappable: !entry.swappable,
            transfers,
            samples: self.sample_set(),
            proofs: self.proofs_out(env),
        };
        Some((session, msg))
    }
}

impl Party for NodeState {
    fn id(&self) -> NodeId {
        NodeState::id(self)
    }

    fn initiate(&mut self, env: &Env, rng: &mut dyn RngCore) -> Option<(ExchangeSession, Redemption)> {
        let ts = self.clock().now(env.cycle);
        self.initiate_at(ts, env, rng)
    }

    fn accept(&mut self, msg: Redemption, env: &Env, rng: &mut dyn RngCore) -> Accept {
        if let Err(outcome) = self.check_redemption(&msg, env) {
            return outcome;
        }
        let s = env.config.swap_len;
        let cap = if msg.nonswappable { env.config.nonswap_swap_cap.min(s) } else { s };
        let mut session = ExchangeSession::new(Role::Responder, msg.initiator, cap, env.config.titfortat);
        let incoming = Batch {
            transfers: msg.transfers,
            samples: msg.samples,
            proofs: msg.proofs,
        };
        if let Err(p) = self.absorb(&mut session, incoming, env) {
            session.closed = true;
            return Accept::Violation(p);
        }
        let owed = if session.titfortat { session.received_count.min(cap) } else { cap };
        let (picked, transfers) = self.pick_transfers(owed, session.partner, env, rng);
        session.sent_count += transfers.len();
        session.sent.extend(picked);
        if !session.titfortat {
            session.closed = true;
        }
        let reply = Batch {
            transfers,
            samples: self.sample_set(),
            proofs: self.proofs_out(env),
        };
        Accept::Accepted { session, reply }
    }

    fn step(
        &mut self,
        session: &mut ExchangeSession,
        incoming: Option<Batch>,
        env: &Env,
        rng: &mut dyn RngCore,
    ) -> Step {
        if session.closed {
            return Step::Done;
        }
        let Some(batch) = incoming else {
            session.closed = true;
            return Step::Done;
        };
        let before = session.received_count;
        if let Err(p) = self.absorb(session, batch, env) {
            session.closed = true;
            return Step::Violation(p);
        }
        if !session.titfortat {
            session.closed = true;
            return Step::Done;
        }
        let count = match session.role {
            Role::Initiator => {
                let got = session.received_count - before;
                let even = session.received_count >= session.sent_count;
                usize::from(got > 0 && even && session.sent_count < session.swap_cap)
            }
            Role::Responder => session.received_count.min(session.swap_cap).saturating_sub(session.sent_count),
        };
        if count == 0 {
            session.closed = true;
            return Step::Done;
        }
        let (picked, transfers) = self.pick_transfers(count, session.partner, env, rng);
        if transfers.is_empty() {
            session.closed = true;
            return Step::Done;
        }
        session.sent_count += transfers.len();
        session.sent.extend(picked);
        Step::Send(Batch {
            transfers,
            ..Batch::default()
        })
    }

    fn finish(&mut self, session: ExchangeSession, _env: &Env) {
        for e in session.received {
            self.insert_owned(e);
        }
        if !session.sent.is_empty() {
            self.mark_nonswappable(&session.sent);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// The redemption never reached the responder.
    Lost,
    Rejected(RejectReason),
    Violation,
}

/// Summary of one exchange as seen from outside.
#[derive(Clone, Debug)]
pub struct ExchangeReport {
    pub outcome: Outcome,
    pub responder: NodeId,
    /// Transfer count of the redeemed descriptor.
    pub redeemed_chain_len: usize,
    pub initiator_sent: usize,
    pub initiator_received: usize,
    pub responder_sent: usize,
    pub responder_received: usize,
    pub violations: Vec<ViolationProof>,
}

/// Drives an exchange already opened by `initiator` to completion.
/// `deliver` decides, per message, whether it arrives.
pub fn run_exchange(
    initiator: &mut dyn Party,
    responder: &mut dyn Party,
    opened: (ExchangeSession, Redemption),
    env: &Env,
    rng: &mut dyn RngCore,
    deliver: &mut dyn FnMut(&mut dyn RngCore) -> bool,
) -> ExchangeReport {
    let (mut si, msg) = opened;
    let mut report = ExchangeReport {
        outcome: Outcome::Completed,
        responder: si.partner,
        redeemed_chain_len: msg.redeemed.transfer_count(),
        initiator_sent: 0,
        initiator_received: 0,
        responder_sent: 0,
        responder_received: 0,
        violations: Vec::new(),
    };
    let close_initiator = |initiator: &mut dyn Party, si: ExchangeSession, report: &mut ExchangeReport| {
        report.initiator_sent = si.sent_count;
        report.initiator_received = si.received_count;
        initiator.finish(si, env);
    };
    if !deliver(rng) {
        report.outcome = Outcome::Lost;
        close_initiator(initiator, si, &mut report);
        return report;
    }
    let (mut sr, reply) = match responder.accept(msg, env, rng) {
        Accept::Accepted { session, reply } => (session, reply),
        Accept::Rejected(r) => {
            report.outcome = Outcome::Rejected(r);
            close_initiator(initiator, si, &mut report);
            return report;
        }
        Accept::Violation(p) => {
            report.outcome = Outcome::Violation;
            report.violations.push(p);
            close_initiator(initiator, si, &mut report);
            return report;
        }
    };
    let mut inbound = if deliver(rng) { Some(reply) } else { None };
    loop {
        match initiator.step(&mut si, inbound.take(), env, rng) {
            Step::Send(batch) => {
                let outbound = if deliver(rng) { Some(batch) } else { None };
                match responder.step(&mut sr, outbound, env, rng) {
                    Step::Send(r) => inbound = if deliver(rng) { Some(r) } else { None },
                    Step::Done => break,
                    Step::Violation(p) => {
                        report.outcome = Outcome::Violation;
                        report.violations.push(p);
                        break;
                    }
                }
            }
            Step::Done => break,
            Step::Violation(p) => {
                report.outcome = Outcome::Violation;
                report.violations.push(p);
                break;
            }
        }
    }
    report.responder_sent = sr.sent_count;
    report.responder_received = sr.received_count;
    responder.finish(sr, env);
    close_initiator(initiator, si, &mut report);
    report
}
