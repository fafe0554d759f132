//! Byzantine replica behaviours built around honest state machines.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{FilterSpec, Strategy};
use crate::chain::{proposal_digest, Block, BlockProposal};
use crate::protocol::fallback::chain_digest;
use crate::sim::{Action, Context, Node, Tick, TimerId, TimerTag};
use crate::types::{value_digest, ReplicaId, SignTag, Value};
use crate::wire::{ChainMsg, RelayEnvelope, SignedValue, WireMessage};

/// Never sends anything.
pub struct SilentNode;

impl Node for SilentNode {
    fn on_start(&mut self, _ctx: &mut Context<'_>) {}
    fn on_message(&mut self, _ctx: &mut Context<'_>, _from: ReplicaId, _msg: WireMessage) {}
    fn on_timer(&mut self, _ctx: &mut Context<'_>, _id: TimerId, _tag: TimerTag) {}
    fn is_done(&self) -> bool {
        true
    }
}

/// A different value of the same shape.
pub fn alternate_value(v: &Value) -> Value {
    match v.as_u64() {
        Some(x) => Value::from_u64(x.wrapping_add(1)),
        None => match v {
            Value::Bottom => Value::Bottom,
            Value::Bytes(b) => {
                let mut b = b.clone();
                b.push(0xee);
                Value::Bytes(b)
            }
        },
    }
}

/// Rewrites a message this replica originated so that it conflicts with the
/// original. Messages it did not originate pass through unchanged.
pub fn equivocate(ctx: &mut Context<'_>, msg: WireMessage) -> WireMessage {
    let me = ctx.id();
    match msg {
        WireMessage::Input(sv) if sv.sig.signer == me && !sv.value.is_bottom() => {
            let value = alternate_value(&sv.value);
            let sig = ctx.sign(value_digest(SignTag::Input, &value));
            WireMessage::Input(SignedValue { value, sig })
        }
        WireMessage::SenderProposal(sv) if sv.sig.signer == me => {
            let value = alternate_value(&sv.value);
            let sig = ctx.sign(value_digest(SignTag::SenderProposal, &value));
            WireMessage::SenderProposal(SignedValue { value, sig })
        }
        WireMessage::Chain(c) if c.instance == me && c.chain.len() == 1 && !c.value.is_bottom() => {
            let value = alternate_value(&c.value);
            let sig = ctx.sign(chain_digest(me, &value));
            WireMessage::Chain(ChainMsg { instance: me, value, chain: vec![sig] })
        }
        WireMessage::Propose(p) if p.sig.signer == me => {
            let mut batch = p.block.batch.clone();
            batch.push(0xee);
            let block = Block { height: p.block.height, batch, parent: p.block.parent };
            let sig = ctx.sign(proposal_digest(block.id(), &p.status, p.view));
            WireMessage::Propose(BlockProposal { block, status: p.status, view: p.view, sig })
        }
        WireMessage::Relay(env) if env.origin == me && !env.relay => {
            let inner = equivocate(ctx, *env.inner);
            WireMessage::Relay(RelayEnvelope { origin: me, relay: false, inner: Box::new(inner) })
        }
        other => other,
    }
}

/// Innermost payload kind and claimed origin of a delivery.
fn payload_view(from: ReplicaId, msg: &WireMessage) -> (ReplicaId, &'static str) {
    match msg {
        WireMessage::Relay(env) => (env.origin, env.inner.kind()),
        other => (from, other.kind()),
    }
}

/// A Byzantine replica that runs one or more honest personas and rewrites
/// their traffic according to its strategy.
pub struct ByzantineNode {
    personas: Vec<Box<dyn Node>>,
    strategy: Strategy,
    coalition: BTreeSet<ReplicaId>,
    big_delta: Tick,
    rng: ChaCha8Rng,
    timer_owner: BTreeMap<TimerId, usize>,
    delayed: BTreeMap<u64, (ReplicaId, WireMessage)>,
    next_key: u64,
}

impl ByzantineNode {
    pub fn new(
        personas: Vec<Box<dyn Node>>,
        strategy: Strategy,
        coalition: BTreeSet<ReplicaId>,
        big_delta: Tick,
        rng: ChaCha8Rng,
    ) -> Self {
        assert!(!personas.is_empty(), "a Byzantine replica needs at least one persona");
        ByzantineNode {
            personas,
            strategy,
            coalition,
            big_delta,
            rng,
            timer_owner: BTreeMap::new(),
            delayed: BTreeMap::new(),
            next_key: 0,
        }
    }

    fn run(&mut self, ctx: &mut Context<'_>, persona: usize, body: impl FnOnce(&mut dyn Node, &mut Context<'_>)) {
        let node = &mut self.personas[persona];
        let ((), actions) = ctx.capture(|c| body(node.as_mut(), c));
        for action in actions {
            match action {
                Action::SetTimer { id, .. } => {
                    self.timer_owner.insert(id, persona);
                    ctx.push(action);
                }
                Action::Send { to, msg, .. } => self.route(ctx, persona, to, msg),
                other => ctx.push(other),
            }
        }
    }

    fn route(&mut self, ctx: &mut Context<'_>, persona: usize, to: ReplicaId, msg: WireMessage) {
        let me = ctx.id();
        match &self.strategy {
            Strategy::Silent => {}
            Strategy::DelayMax => ctx.send_held(to, msg, self.big_delta),
            Strategy::Jitter => {
                let hold = self.rng.gen_range(0..=self.big_delta);
                ctx.send_held(to, msg, hold);
            }
            Strategy::Equivocate { split } => {
                let msg = if to != me && split.contains(&to) { equivocate(ctx, msg) } else { msg };
                ctx.send(to, msg);
            }
            Strategy::Filter(spec) => {
                if !spec.no_send_to.contains(&to) {
                    ctx.send_held(to, msg, spec.hold);
                }
            }
            Strategy::SplitBrain { groups, .. } => {
                if to == me || self.coalition.contains(&to) {
                    ctx.send(to, WireMessage::Lane { lane: persona as u8, inner: Box::new(msg) });
                } else if groups[persona].contains(&to) {
                    ctx.send(to, msg);
                }
            }
        }
    }

    fn filtered(spec: &FilterSpec, from: ReplicaId, msg: &WireMessage) -> bool {
        let (origin, kind) = payload_view(from, msg);
        spec.ignore_kinds.iter().any(|k| k == kind) || spec.ignore_from.contains(&origin) || spec.ignore_from.contains(&from)
    }
}

impl Node for ByzantineNode {
    fn on_start(&mut self, ctx: &mut Context<'_>) {
        for persona in 0..self.personas.len() {
            self.run(ctx, persona, |node, c| node.on_start(c));
        }
    }

    fn on_message(&mut self, ctx: &mut Context<'_>, from: ReplicaId, msg: WireMessage) {
        let (persona, msg) = match (&self.strategy, msg) {
            (Strategy::SplitBrain { .. }, WireMessage::Lane { lane, inner }) => (lane as usize, *inner),
            (Strategy::SplitBrain { groups, .. }, msg) => match groups.iter().position(|g| g.contains(&from)) {
                Some(p) => (p, msg),
                None => return,
            },
            (Strategy::Filter(spec), msg) => {
                if Self::filtered(spec, from, &msg) {
                    return;
                }
                let (origin, _) = payload_view(from, &msg);
                if spec.delay_from.contains(&origin) && spec.delay > 0 {
                    let delay = spec.delay;
                    let key = self.next_key;
                    self.next_key += 1;
                    self.delayed.insert(key, (from, msg));
                    ctx.set_timer(delay, TimerTag::Strategy { key });
                    return;
                }
                (0, msg)
            }
            (_, WireMessage::Lane { .. }) => return,
            (_, msg) => (0, msg),
        };
        if persona < self.personas.len() {
            self.run(ctx, persona, |node, c| node.on_message(c, from, msg));
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_>, id: TimerId, tag: TimerTag) {
        if let TimerTag::Strategy { key } = tag {
            if let Some((from, msg)) = self.delayed.remove(&key) {
                self.run(ctx, 0, |node, c| node.on_message(c, from, msg));
            }
            return;
        }
        if let Some(persona) = self.timer_owner.remove(&id) {
            self.run(ctx, persona, |node, c| node.on_timer(c, id, tag));
        }
    }

    fn is_done(&self) -> bool {
        true
    }
}
