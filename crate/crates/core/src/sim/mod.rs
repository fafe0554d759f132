//! Deterministic discrete-event simulator.
//!
//! Events are ordered by `(time, class, seq)`. Starts and deliveries use
//! class 0 and timers class 1, so a message arriving at the same instant a
//! timer expires is processed first. `seq` is assigned at scheduling time.

pub mod budget;
pub mod config;
pub mod network;
pub mod node;
pub mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ConfigError, DelayPolicy, DeliveryMode, SimConfig, Tick};
pub use network::{LinkAction, LinkBudget, LinkDelay, LinkFault, Network, NetworkFaults, SluggishInterval};
pub use node::{Action, CommitPath, Context, Node, Note, TimerId, TimerTag};
pub use trace::{EnvelopeMeta, Trace, TraceEvent, TraceRecord};

use crate::types::{Authenticator, ReplicaId};
use crate::wire::WireMessage;

enum EventKind {
    Start,
    Deliver { from: ReplicaId, msg: WireMessage },
    Timer { id: TimerId, tag: TimerTag },
}

struct Scheduled {
    time: Tick,
    class: u8,
    seq: u64,
    target: ReplicaId,
    kind: EventKind,
}

impl Scheduled {
    fn key(&self) -> (Tick, u8, u64) {
        (self.time, self.class, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// One replica slot: its state machine and whether it follows the protocol.
pub struct Participant {
    pub node: Box<dyn Node>,
    pub honest: bool,
}

pub struct Simulation {
    cfg: SimConfig,
    offsets: Vec<Tick>,
    honest: Vec<bool>,
    coalition: Vec<ReplicaId>,
    nodes: Vec<Box<dyn Node>>,
    network: Network,
    auth: Authenticator,
    queue: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    next_timer: Vec<u64>,
    live_timers: BTreeSet<(ReplicaId, TimerId)>,
    records: Vec<TraceRecord>,
    horizon: Tick,
}

impl Simulation {
    /// `offsets[i]` is the global time at which replica `i` starts.
    pub fn new(cfg: SimConfig, participants: Vec<Participant>, offsets: Vec<Tick>, faults: NetworkFaults, horizon: Tick) -> Self {
        assert_eq!(participants.len(), cfg.n, "one participant per replica");
        assert_eq!(offsets.len(), cfg.n, "one start offset per replica");
        let honest: Vec<bool> = participants.iter().map(|p| p.honest).collect();
        let coalition = honest.iter().enumerate().filter(|(_, h)| !**h).map(|(i, _)| ReplicaId(i)).collect();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let network = Network::new(&cfg, faults, rng);
        let mut sim = Simulation {
            offsets,
            honest,
            coalition,
            nodes: participants.into_iter().map(|p| p.node).collect(),
            network,
            auth: Authenticator::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            next_timer: vec![0; cfg.n],
            live_timers: BTreeSet::new(),
            records: Vec::new(),
            horizon,
            cfg,
        };
        for i in 0..sim.cfg.n {
            let at = sim.offsets[i];
            sim.schedule(at, 0, ReplicaId(i), EventKind::Start);
        }
        sim
    }

    fn schedule(&mut self, time: Tick, class: u8, target: ReplicaId, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { time, class, seq: self.seq, target, kind }));
    }

    fn record(&mut self, time: Tick, replica: ReplicaId, event: TraceEvent) {
        let local = time.saturating_sub(self.offsets[replica.0]);
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord { time, seq, replica, local, event });
    }

    fn all_honest_done(&self) -> bool {
        self.nodes.iter().zip(&self.honest).all(|(n, h)| !*h || n.is_done())
    }

    pub fn run(mut self) -> Trace {
        let mut end_time = 0;
        let mut finished = self.all_honest_done();
        while !finished {
            let Some(Reverse(ev)) = self.queue.pop() else { break };
            if ev.time > self.horizon {
                end_time = self.horizon;
                break;
            }
            end_time = ev.time;
            self.dispatch(ev);
            finished = self.all_honest_done();
        }
        Trace {
            config: self.cfg.clone(),
            faults: self.network.faults().clone(),
            honest: self.honest,
            offsets: self.offsets,
            records: self.records,
            end_time,
            non_terminating: !finished,
        }
    }

    fn dispatch(&mut self, ev: Scheduled) {
        let target = ev.target;
        let now = ev.time;
        let local = now - self.offsets[target.0];
        let signers: &[ReplicaId] = if self.honest[target.0] { &[] } else { &self.coalition };
        let mut ctx = Context::new(target, self.cfg.n, self.cfg.f, local, now, signers, &mut self.auth, &mut self.next_timer[target.0]);
        let node = &mut self.nodes[target.0];
        let event = match ev.kind {
            EventKind::Start => {
                node.on_start(&mut ctx);
                Some(TraceEvent::Start)
            }
            EventKind::Deliver { from, msg } => {
                let event = TraceEvent::Deliver { from, msg: msg.kind().to_string(), digest: msg.digest(), envelope: EnvelopeMeta::of(&msg) };
                node.on_message(&mut ctx, from, msg);
                Some(event)
            }
            EventKind::Timer { id, tag } => {
                if self.live_timers.remove(&(target, id)) {
                    node.on_timer(&mut ctx, id, tag);
                    Some(TraceEvent::Timer { id, tag })
                } else {
                    None
                }
            }
        };
        let actions = ctx.into_actions();
        if let Some(event) = event {
            self.record(now, target, event);
        }
        for action in actions {
            self.apply(now, target, action);
        }
    }

    fn apply(&mut self, now: Tick, who: ReplicaId, action: Action) {
        match action {
            Action::Send { to, msg, hold } => {
                let hold = if self.honest[who.0] { 0 } else { hold };
                let deliver_at = self.network.delivery_time(who, to, now + hold).map(|t| t.max(self.offsets[to.0]));
                self.record(
                    now,
                    who,
                    TraceEvent::Send { to, msg: msg.kind().to_string(), digest: msg.digest(), deliver_at, envelope: EnvelopeMeta::of(&msg) },
                );
                if let Some(at) = deliver_at {
                    self.schedule(at, 0, to, EventKind::Deliver { from: who, msg });
                }
            }
            Action::SetTimer { id, fire_local, tag } => {
                self.live_timers.insert((who, id));
                let at = self.offsets[who.0] + fire_local;
                self.schedule(at.max(now), 1, who, EventKind::Timer { id, tag });
            }
            Action::Abort(id) => {
                self.live_timers.remove(&(who, id));
            }
            Action::Note(note) => self.record(now, who, TraceEvent::Note(note)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Signature, Value};
    use crate::wire::SignedValue;

    /// Broadcasts once on start and records every delivery and timer.
    struct Echo {
        timer: Option<TimerId>,
        abort: bool,
        seen: usize,
    }

    impl Node for Echo {
        fn on_start(&mut self, ctx: &mut Context<'_>) {
            let sig = Signature::fabricate(ctx.id(), crate::types::Digest(0));
            ctx.broadcast(WireMessage::Input(SignedValue { value: Value::from_u64(ctx.id().0 as u64), sig }));
            self.timer = Some(ctx.set_timer(10, TimerTag::Vote { key: 0 }));
            if self.abort {
                ctx.abort_timer(self.timer.unwrap());
            }
        }
        fn on_message(&mut self, _ctx: &mut Context<'_>, _from: ReplicaId, _msg: WireMessage) {
            self.seen += 1;
        }
        fn on_timer(&mut self, ctx: &mut Context<'_>, _id: TimerId, _tag: TimerTag) {
            ctx.note(Note::Done);
        }
        fn is_done(&self) -> bool {
            false
        }
    }

    fn run(offsets: Vec<Tick>, abort: bool) -> Trace {
        let mut cfg = SimConfig::new(3, 1, 10, 1);
        cfg.delay = DelayPolicy::Fixed(1);
        let parts = (0..3).map(|_| Participant { node: Box::new(Echo { timer: None, abort, seen: 0 }), honest: true }).collect();
        Simulation::new(cfg, parts, offsets, NetworkFaults::default(), 100).run()
    }

    #[test]
    fn timers_fire_at_local_deadline() {
        let trace = run(vec![0, 3, 5], false);
        let fired: Vec<(Tick, Tick)> = trace
            .records
            .iter()
            .filter(|r| matches!(r.event, TraceEvent::Timer { .. }))
            .map(|r| (r.time, r.local))
            .collect();
        assert_eq!(fired, vec![(10, 10), (13, 10), (15, 10)]);
        assert!(trace.non_terminating);
    }

    #[test]
    fn aborted_timer_never_fires() {
        let trace = run(vec![0, 0, 0], true);
        assert!(!trace.records.iter().any(|r| matches!(r.event, TraceEvent::Timer { .. })));
    }

    #[test]
    fn messages_to_unstarted_replicas_wait_for_start() {
        let trace = run(vec![0, 0, 5], false);
        let first_delivery_to_2 =
            trace.records.iter().find(|r| r.replica == ReplicaId(2) && matches!(r.event, TraceEvent::Deliver { .. })).unwrap();
        let start_2 = trace.records.iter().position(|r| r.replica == ReplicaId(2) && r.event == TraceEvent::Start).unwrap();
        assert_eq!(first_delivery_to_2.time, 5);
        assert!(start_2 < first_delivery_to_2.seq as usize);
    }

    #[test]
    fn identical_inputs_give_identical_logs() {
        assert_eq!(run(vec![0, 2, 4], false).records_ndjson(), run(vec![0, 2, 4], false).records_ndjson());
    }
}
