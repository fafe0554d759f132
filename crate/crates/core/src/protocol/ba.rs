//! Agreement and designated-sender broadcast replicas with a one-Δ fast path.

use std::collections::{BTreeMap, BTreeSet};

use super::fallback::LockStepBa;
use super::Timing;
use crate::sim::{CommitPath, Context, Node, Note, Tick, TimerId, TimerTag};
use crate::types::{value_digest, verify_proposal, Proposal, ReplicaId, SignTag, Signature, Value};
use crate::wire::{ChainMsg, SignedValue, ValueVotes, WireMessage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BaTiming {
    pub big_delta: Tick,
    /// Latest local time at which a vote quorum still commits.
    pub commit_deadline: Tick,
    /// Local time at which the lock-step fallback begins.
    pub fallback_start: Tick,
    /// Length of one fallback round.
    pub round: Tick,
}

impl BaTiming {
    pub fn new(t: Timing) -> Self {
        BaTiming {
            big_delta: t.big_delta,
            commit_deadline: 3 * t.big_delta + t.sigma,
            fallback_start: 4 * t.big_delta + 2 * t.sigma,
            round: 2 * t.big_delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BaMode {
    /// Every replica may hold an input. `None` means the replica has none.
    Agreement { input: Option<Value> },
    /// Only `sender` proposes; the others ignore `input`.
    Broadcast { sender: ReplicaId, input: Option<Value> },
}

pub struct BaNode {
    n: usize,
    f: usize,
    mode: BaMode,
    timing: BaTiming,
    inputs: BTreeMap<Value, BTreeMap<ReplicaId, Signature>>,
    proposals: BTreeMap<Value, WireMessage>,
    vote_timers: BTreeMap<TimerId, Value>,
    votes: BTreeMap<Value, BTreeMap<ReplicaId, Signature>>,
    quorums: BTreeSet<Value>,
    lock: Option<Value>,
    committed: Option<Value>,
    fallback: Option<LockStepBa>,
    early_chains: Vec<ChainMsg>,
    finished: bool,
}

fn timer_key(value: &Value) -> u64 {
    value_digest(SignTag::ValueVote, value).0
}

impl BaNode {
    pub fn new(n: usize, f: usize, mode: BaMode, timing: BaTiming) -> Self {
        BaNode {
            n,
            f,
            mode,
            timing,
            inputs: BTreeMap::new(),
            proposals: BTreeMap::new(),
            vote_timers: BTreeMap::new(),
            votes: BTreeMap::new(),
            quorums: BTreeSet::new(),
            lock: None,
            committed: None,
            fallback: None,
            early_chains: Vec::new(),
            finished: false,
        }
    }

    pub fn committed(&self) -> Option<&Value> {
        self.committed.as_ref()
    }

    pub fn lock(&self) -> Option<&Value> {
        self.lock.as_ref()
    }

    fn on_input(&mut self, ctx: &mut Context<'_>, m: SignedValue) {
        if !matches!(self.mode, BaMode::Agreement { .. }) || m.value.is_bottom() || m.sig.signer.0 >= self.n {
            return;
        }
        if !ctx.verify(&m.sig, value_digest(SignTag::Input, &m.value)) {
            return;
        }
        let signers = self.inputs.entry(m.value.clone()).or_default();
        signers.insert(m.sig.signer, m.sig);
        if signers.len() == self.f + 1 && !self.proposals.contains_key(&m.value) {
            let proposal = Proposal { value: m.value.clone(), signatures: signers.values().copied().collect() };
            self.accept_proposal(ctx, m.value, WireMessage::Proposal(proposal));
        }
    }

    fn on_proposal(&mut self, ctx: &mut Context<'_>, p: Proposal) {
        if !matches!(self.mode, BaMode::Agreement { .. }) || self.proposals.contains_key(&p.value) {
            return;
        }
        if verify_proposal(ctx.auth(), &p, self.n, self.f) {
            self.accept_proposal(ctx, p.value.clone(), WireMessage::Proposal(p));
        }
    }

    fn on_sender_proposal(&mut self, ctx: &mut Context<'_>, m: SignedValue) {
        let BaMode::Broadcast { sender, .. } = self.mode else { return };
        if m.sig.signer != sender || m.value.is_bottom() || self.proposals.contains_key(&m.value) {
            return;
        }
        if ctx.verify(&m.sig, value_digest(SignTag::SenderProposal, &m.value)) {
            self.accept_proposal(ctx, m.value.clone(), WireMessage::SenderProposal(m));
        }
    }

    /// Forwards a new valid proposal and waits Δ for a conflicting one.
    fn accept_proposal(&mut self, ctx: &mut Context<'_>, value: Value, wire: WireMessage) {
        ctx.note(Note::ProposalSeen { value: value.clone() });
        ctx.send_to_others(wire.clone());
        self.proposals.insert(value.clone(), wire);
        let id = ctx.set_timer(self.timing.big_delta, TimerTag::Vote { key: timer_key(&value) });
        self.vote_timers.insert(id, value);
    }

    fn on_vote_timer(&mut self, ctx: &mut Context<'_>, id: TimerId) {
        let Some(value) = self.vote_timers.remove(&id) else { return };
        if self.proposals.len() != 1 {
            return;
        }
        let sig = ctx.sign(value_digest(SignTag::ValueVote, &value));
        ctx.note(Note::Voted { value: value.clone() });
        ctx.broadcast(WireMessage::ValueVote(SignedValue { value, sig }));
    }

    fn count_vote(&mut self, ctx: &mut Context<'_>, value: &Value, sig: Signature) {
        if value.is_bottom() || sig.signer.0 >= self.n || !ctx.verify(&sig, value_digest(SignTag::ValueVote, value)) {
            return;
        }
        let signers = self.votes.entry(value.clone()).or_default();
        signers.insert(sig.signer, sig);
        if signers.len() < self.f + 1 || self.quorums.contains(value) {
            return;
        }
        let votes: Vec<Signature> = signers.values().copied().collect();
        self.quorums.insert(value.clone());
        self.on_quorum(ctx, value.clone(), votes);
    }

    fn on_quorum(&mut self, ctx: &mut Context<'_>, value: Value, votes: Vec<Signature>) {
        if self.lock.is_some() {
            ctx.note(Note::SecondQuorum { value });
            return;
        }
        self.lock = Some(value.clone());
        ctx.note(Note::Locked { value: value.clone() });
        if ctx.now() <= self.timing.commit_deadline {
            ctx.send_to_others(WireMessage::ValueVotes(ValueVotes { value: value.clone(), votes }));
            self.commit(ctx, value, CommitPath::Quorum);
        }
    }

    fn commit(&mut self, ctx: &mut Context<'_>, value: Value, path: CommitPath) {
        if self.committed.is_none() {
            self.committed = Some(value.clone());
            ctx.note(Note::Decided { value, path });
        }
    }

    fn start_fallback(&mut self, ctx: &mut Context<'_>) {
        let lock = self.lock.clone().unwrap_or(Value::Bottom);
        ctx.note(Note::FallbackStarted { lock: lock.clone() });
        let mut ba = LockStepBa::new(self.n, self.f, lock);
        let own = ba.start(ctx);
        for m in self.early_chains.drain(..) {
            ba.receive(m);
        }
        ctx.broadcast(WireMessage::Chain(own));
        for round in 1..=LockStepBa::rounds(self.f) {
            ctx.set_timer(round as Tick * self.timing.round, TimerTag::FallbackRound { round });
        }
        self.fallback = Some(ba);
    }

    fn end_round(&mut self, ctx: &mut Context<'_>, round: u32) {
        let Some(ba) = self.fallback.as_mut() else { return };
        let out = ba.end_round(round, ctx);
        for m in out.relay {
            ctx.send_to_others(WireMessage::Chain(m));
        }
        if let Some(value) = out.decided {
            self.commit(ctx, value, CommitPath::Fallback);
            self.finished = true;
        }
    }
}

impl Node for BaNode {
    fn on_start(&mut self, ctx: &mut Context<'_>) {
        match self.mode.clone() {
            BaMode::Agreement { input: Some(value) } if !value.is_bottom() => {
                ctx.note(Note::Input { value: value.clone() });
                let sig = ctx.sign(value_digest(SignTag::Input, &value));
                ctx.broadcast(WireMessage::Input(SignedValue { value, sig }));
            }
            BaMode::Broadcast { sender, input: Some(value) } if sender == ctx.id() && !value.is_bottom() => {
                ctx.note(Note::Input { value: value.clone() });
                let sig = ctx.sign(value_digest(SignTag::SenderProposal, &value));
                ctx.broadcast(WireMessage::SenderProposal(SignedValue { value, sig }));
            }
            _ => {}
        }
        ctx.set_timer(self.timing.fallback_start, TimerTag::FallbackStart);
    }

    fn on_message(&mut self, ctx: &mut Context<'_>, _from: ReplicaId, msg: WireMessage) {
        match msg {
            WireMessage::Input(m) => self.on_input(ctx, m),
            WireMessage::Proposal(p) => self.on_proposal(ctx, p),
            WireMessage::SenderProposal(m) => self.on_sender_proposal(ctx, m),
            WireMessage::ValueVote(m) => self.count_vote(ctx, &m.value, m.sig),
            WireMessage::ValueVotes(vv) => {
                for sig in vv.votes {
                    self.count_vote(ctx, &vv.value, sig);
                }
            }
            WireMessage::Chain(c) => match self.fallback.as_mut() {
                Some(ba) => ba.receive(c),
                None => self.early_chains.push(c),
            },
            _ => {}
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_>, id: TimerId, tag: TimerTag) {
        match tag {
            TimerTag::Vote { .. } => self.on_vote_timer(ctx, id),
            TimerTag::FallbackStart => self.start_fallback(ctx),
            TimerTag::FallbackRound { round } => self.end_round(ctx, round),
            _ => {}
        }
    }

    fn is_done(&self) -> bool {
        self.committed.is_some() || self.finished
    }
}
