//! Relay transformation for networks with mobile link failures.
//!
//! Every outgoing message is wrapped in an envelope naming its origin. A
//! replica that receives an envelope directly from its origin relays it once
//! to every replica other than the origin and itself. The wrapped node sees
//! each distinct (origin, message) pair exactly once. Callers build the
//! wrapped node with doubled timing.

use std::collections::BTreeSet;

use crate::sim::{Action, Context, Node, TimerId, TimerTag};
use crate::types::{Digest, ReplicaId};
use crate::wire::{RelayEnvelope, WireMessage};

pub struct MlfNode {
    inner: Box<dyn Node>,
    relayed: BTreeSet<(ReplicaId, Digest)>,
    delivered: BTreeSet<(ReplicaId, Digest)>,
}

impl MlfNode {
    pub fn new(inner: Box<dyn Node>) -> Self {
        MlfNode { inner, relayed: BTreeSet::new(), delivered: BTreeSet::new() }
    }

    fn wrap(ctx: &mut Context<'_>, actions: Vec<Action>) {
        let origin = ctx.id();
        for action in actions {
            match action {
                Action::Send { to, msg, hold } => ctx.push(Action::Send {
                    to,
                    msg: WireMessage::Relay(RelayEnvelope { origin, relay: false, inner: Box::new(msg) }),
                    hold,
                }),
                other => ctx.push(other),
            }
        }
    }
}

impl Node for MlfNode {
    fn on_start(&mut self, ctx: &mut Context<'_>) {
        let inner = &mut self.inner;
        let ((), actions) = ctx.capture(|c| inner.on_start(c));
        Self::wrap(ctx, actions);
    }

    fn on_message(&mut self, ctx: &mut Context<'_>, from: ReplicaId, msg: WireMessage) {
        let WireMessage::Relay(env) = msg else { return };
        if !env.relay && env.origin != from {
            return;
        }
        let me = ctx.id();
        let key = (env.origin, env.inner.digest());
        if !env.relay && env.origin != me && self.relayed.insert(key) {
            let copy = WireMessage::Relay(RelayEnvelope { origin: env.origin, relay: true, inner: env.inner.clone() });
            for to in ctx.replicas().filter(|r| *r != me && *r != env.origin).collect::<Vec<_>>() {
                ctx.send(to, copy.clone());
            }
        }
        if self.delivered.insert(key) {
            let inner = &mut self.inner;
            let ((), actions) = ctx.capture(|c| inner.on_message(c, env.origin, *env.inner));
            Self::wrap(ctx, actions);
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_>, id: TimerId, tag: TimerTag) {
        let inner = &mut self.inner;
        let ((), actions) = ctx.capture(|c| inner.on_timer(c, id, tag));
        Self::wrap(ctx, actions);
    }

    fn is_done(&self) -> bool {
        self.inner.is_done()
    }
}
