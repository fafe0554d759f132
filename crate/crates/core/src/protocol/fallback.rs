//! Lock-step Byzantine agreement used when the fast path does not commit.
//!
//! Each replica runs a signature-chain broadcast of its input, all `n`
//! instances in parallel. Rounds are numbered from 1. At the end of round
//! `r` a replica accepts chains with at least `r` valid signatures, extracts
//! at most two values per instance, and relays newly extracted values with
//! its own signature appended while `r <= f`. After round `f + 2` each
//! instance outputs its single extracted value (or bottom) and the replica
//! decides the value held by a strict majority of instances, else bottom.

use std::collections::{BTreeMap, BTreeSet};

use crate::codec::Encoder;
use crate::types::{signing_digest, Authenticator, Digest, ReplicaId, SignTag, Signature, Value};
use crate::sim::{CommitPath, Context, Node, Note, Tick, TimerId, TimerTag};
use crate::wire::{ChainMsg, WireMessage};

pub fn chain_digest(instance: ReplicaId, value: &Value) -> Digest {
    signing_digest(SignTag::Chain, |e: &mut Encoder| {
        e.put(&instance).put(value);
    })
}

/// Signing capability of one replica.
pub trait Signer {
    fn signer_id(&self) -> ReplicaId;
    fn sign_digest(&mut self, digest: Digest) -> Signature;
    fn check(&self, sig: &Signature, digest: Digest) -> bool;
}

/// A replica's own key over a shared authenticator.
pub struct Key<'a> {
    pub id: ReplicaId,
    pub auth: &'a mut Authenticator,
}

impl Signer for Key<'_> {
    fn signer_id(&self) -> ReplicaId {
        self.id
    }
    fn sign_digest(&mut self, digest: Digest) -> Signature {
        self.auth.sign(self.id, digest)
    }
    fn check(&self, sig: &Signature, digest: Digest) -> bool {
        self.auth.verify(sig, digest)
    }
}

impl Signer for crate::sim::Context<'_> {
    fn signer_id(&self) -> ReplicaId {
        self.id()
    }
    fn sign_digest(&mut self, digest: Digest) -> Signature {
        self.sign(digest)
    }
    fn check(&self, sig: &Signature, digest: Digest) -> bool {
        self.verify(sig, digest)
    }
}

/// Valid chain for its instance with at least `min_len` distinct signers.
pub fn chain_valid(msg: &ChainMsg, n: usize, min_len: usize, check: impl Fn(&Signature, Digest) -> bool) -> bool {
    if msg.chain.len() < min_len.max(1) || msg.instance.0 >= n || msg.chain[0].signer != msg.instance {
        return false;
    }
    let digest = chain_digest(msg.instance, &msg.value);
    let mut signers = BTreeSet::new();
    msg.chain.iter().all(|s| s.signer.0 < n && signers.insert(s.signer) && check(s, digest))
}

#[derive(Debug, Default)]
pub struct RoundOutcome {
    /// Chains to send to every other replica.
    pub relay: Vec<ChainMsg>,
    pub decided: Option<Value>,
}

#[derive(Clone, Debug)]
pub struct LockStepBa {
    n: usize,
    f: usize,
    input: Value,
    pending: Vec<ChainMsg>,
    extracted: BTreeMap<ReplicaId, Vec<Value>>,
    last_round: u32,
    decided: Option<Value>,
}

impl LockStepBa {
    pub fn new(n: usize, f: usize, input: Value) -> Self {
        LockStepBa { n, f, input, pending: Vec::new(), extracted: BTreeMap::new(), last_round: 0, decided: None }
    }

    /// Number of rounds until the decision.
    pub fn rounds(f: usize) -> u32 {
        f as u32 + 2
    }

    pub fn decided(&self) -> Option<&Value> {
        self.decided.as_ref()
    }

    pub fn extracted(&self, instance: ReplicaId) -> &[Value] {
        self.extracted.get(&instance).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The round-1 message carrying this replica's input, to be sent to
    /// every replica including itself.
    pub fn start(&mut self, key: &mut impl Signer) -> ChainMsg {
        let me = key.signer_id();
        let sig = key.sign_digest(chain_digest(me, &self.input));
        ChainMsg { instance: me, value: self.input.clone(), chain: vec![sig] }
    }

    pub fn receive(&mut self, msg: ChainMsg) {
        if self.decided.is_none() {
            self.pending.push(msg);
        }
    }

    /// Closes round `round`. Rounds must be closed in increasing order.
    pub fn end_round(&mut self, round: u32, key: &mut impl Signer) -> RoundOutcome {
        let mut out = RoundOutcome::default();
        if self.decided.is_some() || round <= self.last_round {
            return out;
        }
        self.last_round = round;
        let me = key.signer_id();
        for msg in std::mem::take(&mut self.pending) {
            if !chain_valid(&msg, self.n, round as usize, |s, d| key.check(s, d)) {
                continue;
            }
            let values = self.extracted.entry(msg.instance).or_default();
            if values.len() >= 2 || values.contains(&msg.value) {
                continue;
            }
            values.push(msg.value.clone());
            let already_signed = msg.chain.iter().any(|s| s.signer == me);
            if round as usize <= self.f && !already_signed {
                let mut chain = msg.chain.clone();
                chain.push(key.sign_digest(chain_digest(msg.instance, &msg.value)));
                out.relay.push(ChainMsg { instance: msg.instance, value: msg.value, chain });
            }
        }
        if round >= Self::rounds(self.f) {
            let decision = self.decide();
            self.decided = Some(decision.clone());
            out.decided = Some(decision);
        }
        out
    }

    fn decide(&self) -> Value {
        let mut tally: BTreeMap<&Value, usize> = BTreeMap::new();
        for values in self.extracted.values() {
            if let [only] = values.as_slice() {
                if !only.is_bottom() {
                    *tally.entry(only).or_default() += 1;
                }
            }
        }
        tally.into_iter().find(|(_, c)| 2 * c > self.n).map(|(v, _)| v.clone()).unwrap_or(Value::Bottom)
    }
}

/// Stand-alone replica running only the lock-step agreement from its start.
pub struct FallbackNode {
    ba: LockStepBa,
    round_len: Tick,
    decided: bool,
}

impl FallbackNode {
    pub fn new(n: usize, f: usize, input: Value, round_len: Tick) -> Self {
        FallbackNode { ba: LockStepBa::new(n, f, input), round_len, decided: false }
    }
}

impl Node for FallbackNode {
    fn on_start(&mut self, ctx: &mut Context<'_>) {
        ctx.note(Note::FallbackStarted { lock: self.ba.input.clone() });
        let own = self.ba.start(ctx);
        ctx.broadcast(WireMessage::Chain(own));
        for round in 1..=LockStepBa::rounds(self.ba.f) {
            ctx.set_timer(round as Tick * self.round_len, TimerTag::FallbackRound { round });
        }
    }

    fn on_message(&mut self, _ctx: &mut Context<'_>, _from: ReplicaId, msg: WireMessage) {
        if let WireMessage::Chain(c) = msg {
            self.ba.receive(c);
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_>, _id: TimerId, tag: TimerTag) {
        let TimerTag::FallbackRound { round } = tag else { return };
        let out = self.ba.end_round(round, ctx);
        for m in out.relay {
            ctx.send_to_others(WireMessage::Chain(m));
        }
        if let Some(value) = out.decided {
            self.decided = true;
            ctx.note(Note::Decided { value, path: CommitPath::Fallback });
        }
    }

    fn is_done(&self) -> bool {
        self.decided
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Runs every replica in lock step with no Byzantine traffic.
    fn run_honest(inputs: &[Value], f: usize) -> Vec<Value> {
        let n = inputs.len();
        let mut auth = Authenticator::new();
        let mut nodes: Vec<LockStepBa> = inputs.iter().map(|v| LockStepBa::new(n, f, v.clone())).collect();
        let mut inflight: Vec<ChainMsg> =
            (0..n).map(|i| nodes[i].start(&mut Key { id: ReplicaId(i), auth: &mut auth })).collect();
        let mut decisions = vec![None; n];
        for round in 1..=LockStepBa::rounds(f) {
            for node in nodes.iter_mut() {
                for m in &inflight {
                    node.receive(m.clone());
                }
            }
            inflight.clear();
            for (i, node) in nodes.iter_mut().enumerate() {
                let out = node.end_round(round, &mut Key { id: ReplicaId(i), auth: &mut auth });
                inflight.extend(out.relay);
                if let Some(d) = out.decided {
                    decisions[i] = Some(d);
                }
            }
        }
        decisions.into_iter().map(|d| d.expect("decided after f+2 rounds")).collect()
    }

    #[test]
    fn unanimous_inputs_are_decided() {
        let v = Value::from_u64(0);
        assert_eq!(run_honest(&[v.clone(), v.clone(), v.clone()], 1), vec![v.clone(); 3]);
    }

    #[test]
    fn majority_input_wins() {
        let (a, b) = (Value::from_u64(1), Value::from_u64(2));
        let out = run_honest(&[a.clone(), a.clone(), b, a.clone(), Value::Bottom], 2);
        assert_eq!(out, vec![a; 5]);
    }

    #[test]
    fn no_majority_gives_bottom() {
        let out = run_honest(&[Value::from_u64(0), Value::from_u64(1), Value::Bottom], 1);
        assert_eq!(out, vec![Value::Bottom; 3]);
    }

    #[test]
    fn chain_must_start_with_owner_and_be_long_enough() {
        let mut auth = Authenticator::new();
        let v = Value::from_u64(3);
        let d = chain_digest(ReplicaId(0), &v);
        let s0 = auth.sign(ReplicaId(0), d);
        let s1 = auth.sign(ReplicaId(1), d);
        let ok = ChainMsg { instance: ReplicaId(0), value: v.clone(), chain: vec![s0, s1] };
        assert!(chain_valid(&ok, 3, 2, |s, d| auth.verify(s, d)));
        assert!(!chain_valid(&ok, 3, 3, |s, d| auth.verify(s, d)));
        let swapped = ChainMsg { instance: ReplicaId(0), value: v.clone(), chain: vec![s1, s0] };
        assert!(!chain_valid(&swapped, 3, 1, |s, d| auth.verify(s, d)));
        let repeated = ChainMsg { instance: ReplicaId(0), value: v, chain: vec![s0, s0] };
        assert!(!chain_valid(&repeated, 3, 2, |s, d| auth.verify(s, d)));
    }
}
