//! The interface between replica state machines and the simulator.

use serde::{Deserialize, Serialize};

use super::config::Tick;
use crate::chain::BlockId;
use crate::types::{Authenticator, Digest, ReplicaId, Signature, Value};
use crate::wire::WireMessage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimerId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "timer")]
pub enum TimerTag {
    /// Vote wait keyed by a value digest (agreement) or a height (replication).
    Vote { key: u64 },
    FallbackStart,
    FallbackRound { round: u32 },
    Propose { view: u64 },
    LeaderReady { view: u64 },
    Progress { view: u64, p: u64 },
    EnterView { view: u64 },
    /// Private timers of adversary strategies.
    Strategy { key: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommitPath {
    Quorum,
    Fallback,
}

/// Observations a replica records in the trace. Invariant checkers and
/// latency reports work from these.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "note")]
pub enum Note {
    Input { value: Value },
    ProposalSeen { value: Value },
    Voted { value: Value },
    Locked { value: Value },
    /// A quorum on a second value after a lock was already set.
    SecondQuorum { value: Value },
    FallbackStarted { lock: Value },
    Decided { value: Value, path: CommitPath },
    BlockLearned { block: BlockId, height: u64, parent: BlockId },
    Proposed { view: u64, height: u64, block: BlockId },
    CertObserved { view: i64, height: u64, block: BlockId },
    BlockCommitted { height: u64, block: BlockId, view: u64, direct: bool },
    /// Two committed blocks at one height at a single replica.
    CommitConflict { height: u64, kept: BlockId, other: BlockId },
    Blamed { view: u64, equivocation: bool },
    BlameQuorum { view: u64 },
    EnteredView { view: u64 },
    Equivocation { view: u64 },
    Done,
}

#[derive(Clone, Debug)]
pub enum Action {
    /// `hold` postpones the moment the message is put on the wire. The
    /// simulator honours it only for Byzantine senders.
    Send { to: ReplicaId, msg: WireMessage, hold: Tick },
    SetTimer { id: TimerId, fire_local: Tick, tag: TimerTag },
    Abort(TimerId),
    Note(Note),
}

/// Handed to a node for the duration of one event.
pub struct Context<'a> {
    id: ReplicaId,
    n: usize,
    f: usize,
    local_now: Tick,
    global_now: Tick,
    signers: &'a [ReplicaId],
    auth: &'a mut Authenticator,
    next_timer: &'a mut u64,
    actions: Vec<Action>,
}

impl<'a> Context<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: ReplicaId,
        n: usize,
        f: usize,
        local_now: Tick,
        global_now: Tick,
        signers: &'a [ReplicaId],
        auth: &'a mut Authenticator,
        next_timer: &'a mut u64,
    ) -> Self {
        Context { id, n, f, local_now, global_now, signers, auth, next_timer, actions: Vec::new() }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    /// Local clock reading.
    pub fn now(&self) -> Tick {
        self.local_now
    }

    pub fn global_now(&self) -> Tick {
        self.global_now
    }

    pub fn replicas(&self) -> impl Iterator<Item = ReplicaId> {
        (0..self.n).map(ReplicaId)
    }

    pub fn send(&mut self, to: ReplicaId, msg: WireMessage) {
        self.actions.push(Action::Send { to, msg, hold: 0 });
    }

    pub fn send_held(&mut self, to: ReplicaId, msg: WireMessage, hold: Tick) {
        self.actions.push(Action::Send { to, msg, hold });
    }

    /// Sends to every replica including this one.
    pub fn broadcast(&mut self, msg: WireMessage) {
        for to in 0..self.n {
            self.actions.push(Action::Send { to: ReplicaId(to), msg: msg.clone(), hold: 0 });
        }
    }

    pub fn send_to_others(&mut self, msg: WireMessage) {
        for to in (0..self.n).map(ReplicaId).filter(|r| *r != self.id) {
            self.actions.push(Action::Send { to, msg: msg.clone(), hold: 0 });
        }
    }

    pub fn set_timer(&mut self, after: Tick, tag: TimerTag) -> TimerId {
        let id = TimerId(*self.next_timer);
        *self.next_timer += 1;
        self.actions.push(Action::SetTimer { id, fire_local: self.local_now + after, tag });
        id
    }

    pub fn abort_timer(&mut self, id: TimerId) {
        self.actions.push(Action::Abort(id));
    }

    pub fn sign(&mut self, digest: Digest) -> Signature {
        self.auth.sign(self.id, digest)
    }

    /// Signs on behalf of `who`. Succeeds only for identities this node
    /// controls; anything else yields a signature that fails verification.
    pub fn sign_as(&mut self, who: ReplicaId, digest: Digest) -> Signature {
        if who == self.id || self.signers.contains(&who) {
            self.auth.sign(who, digest)
        } else {
            Signature::fabricate(who, digest)
        }
    }

    pub fn verify(&self, sig: &Signature, digest: Digest) -> bool {
        self.auth.verify(sig, digest)
    }

    pub fn auth(&self) -> &Authenticator {
        self.auth
    }

    pub fn note(&mut self, note: Note) {
        self.actions.push(Action::Note(note));
    }

    pub fn push(&mut self, action: Action) {
        self.actions.push(action);
    }

    /// Runs `body` against a fresh context sharing this one's clock,
    /// identity and authenticator, returning the actions it produced
    /// instead of committing them. Wrappers use this to rewrite traffic.
    pub fn capture<R>(&mut self, body: impl FnOnce(&mut Context<'_>) -> R) -> (R, Vec<Action>) {
        let mut inner = Context {
            id: self.id,
            n: self.n,
            f: self.f,
            local_now: self.local_now,
            global_now: self.global_now,
            signers: self.signers,
            auth: &mut *self.auth,
            next_timer: &mut *self.next_timer,
            actions: Vec::new(),
        };
        let out = body(&mut inner);
        (out, inner.actions)
    }

    pub fn into_actions(self) -> Vec<Action> {
        self.actions
    }
}

pub trait Node {
    fn on_start(&mut self, ctx: &mut Context<'_>);
    fn on_message(&mut self, ctx: &mut Context<'_>, from: ReplicaId, msg: WireMessage);
    fn on_timer(&mut self, ctx: &mut Context<'_>, id: TimerId, tag: TimerTag);
    /// Whether this replica has reached its final state. The run ends once
    /// every honest replica is done; done replicas keep processing events.
    fn is_done(&self) -> bool;
}
