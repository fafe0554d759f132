//! Exhaustive exploration of the lock-step agreement with three replicas,
//! one of them Byzantine.
//!
//! Honest replicas exchange messages in lock step. In every round the
//! Byzantine replica may hand each honest replica any subset of the chains
//! for its own instance that it can assemble from its own signature and the
//! honest signatures it has observed. Chains for honest instances are left
//! out: their first signature pins the value, and every honest replica
//! already receives it directly in round 1.

use std::collections::{BTreeMap, BTreeSet};

use onedelta::protocol::fallback::{chain_digest, Key, LockStepBa};
use onedelta::types::{Authenticator, ReplicaId, Signature, Value};
use onedelta::wire::ChainMsg;

pub const N: usize = 3;
pub const F: usize = 1;

#[derive(Debug, Default)]
pub struct Summary {
    pub executions: u64,
    pub max_rounds: u32,
    pub failures: Vec<String>,
}

#[derive(Clone)]
struct World {
    honest: [ReplicaId; 2],
    nodes: [LockStepBa; 2],
    /// Messages in flight, with recipients.
    inflight: Vec<(ChainMsg, Vec<ReplicaId>)>,
    /// Honest signatures the Byzantine replica has seen, per value of its instance.
    seen: BTreeMap<Value, BTreeSet<Signature>>,
    inputs: [Value; 2],
    decisions: [Option<Value>; 2],
    trail: Vec<String>,
}

fn byz_values() -> [Value; 2] {
    [Value::from_u64(0), Value::from_u64(1)]
}

fn observe(world: &mut World, byz: ReplicaId) {
    for (m, to) in &world.inflight {
        if m.instance == byz && to.contains(&byz) {
            let entry = world.seen.entry(m.value.clone()).or_default();
            entry.extend(m.chain.iter().filter(|s| s.signer != byz).copied());
        }
    }
}

/// Longest chain the Byzantine replica can build for `value` on its own instance.
fn best_chain(world: &World, byz: ReplicaId, value: &Value, auth: &mut Authenticator) -> ChainMsg {
    let own = auth.sign(byz, chain_digest(byz, value));
    let mut chain = vec![own];
    chain.extend(world.seen.get(value).into_iter().flatten().copied());
    ChainMsg { instance: byz, value: value.clone(), chain }
}

fn subsets<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    (0..1u32 << items.len()).map(|mask| items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, x)| x.clone()).collect()).collect()
}

fn step(mut world: World, byz: ReplicaId, round: u32, auth: &mut Authenticator, summary: &mut Summary) {
    observe(&mut world, byz);
    let rounds = LockStepBa::rounds(F);
    if round > rounds {
        finish(&world, summary);
        return;
    }
    let candidates: Vec<ChainMsg> = byz_values()
        .iter()
        .map(|v| best_chain(&world, byz, v, auth))
        .filter(|c| c.chain.len() >= round as usize)
        .collect();
    let options = subsets(&candidates);
    for first in &options {
        for second in &options {
            let mut w = world.clone();
            let honest_msgs = std::mem::take(&mut w.inflight);
            let mut next = Vec::new();
            for (k, choice) in [first, second].into_iter().enumerate() {
                let me = w.honest[k];
                for (m, to) in &honest_msgs {
                    if to.contains(&me) {
                        w.nodes[k].receive(m.clone());
                    }
                }
                for m in choice {
                    w.nodes[k].receive(m.clone());
                }
                let out = w.nodes[k].end_round(round, &mut Key { id: me, auth });
                let others: Vec<ReplicaId> = (0..N).map(ReplicaId).filter(|r| *r != me).collect();
                for m in out.relay {
                    next.push((m, others.clone()));
                }
                if let Some(d) = out.decided {
                    w.decisions[k] = Some(d);
                }
            }
            w.inflight = next;
            w.trail.push(format!(
                "r{round}: {:?} / {:?}",
                first.iter().map(|c| (&c.value, c.chain.len())).collect::<Vec<_>>(),
                second.iter().map(|c| (&c.value, c.chain.len())).collect::<Vec<_>>()
            ));
            step(w, byz, round + 1, auth, summary);
        }
    }
}

fn finish(world: &World, summary: &mut Summary) {
    summary.executions += 1;
    summary.max_rounds = summary.max_rounds.max(LockStepBa::rounds(F));
    let ctx = || format!("inputs {:?}, honest {:?}, byzantine moves {:?}", world.inputs, world.honest, world.trail);
    let [Some(a), Some(b)] = &world.decisions else {
        summary.failures.push(format!("termination: {}", ctx()));
        return;
    };
    if a != b {
        summary.failures.push(format!("agreement: {a:?} vs {b:?}; {}", ctx()));
    }
    let [x, y] = &world.inputs;
    if x == y && !x.is_bottom() && a != x {
        summary.failures.push(format!("validity: decided {a:?}; {}", ctx()));
    }
}

/// Explores every Byzantine position, every pair of honest inputs from
/// {0, 1, bottom}, and every Byzantine message choice.
pub fn explore() -> Summary {
    let mut summary = Summary::default();
    let inputs = [Value::from_u64(0), Value::from_u64(1), Value::Bottom];
    for byz in (0..N).map(ReplicaId) {
        let honest: Vec<ReplicaId> = (0..N).map(ReplicaId).filter(|r| *r != byz).collect();
        let honest = [honest[0], honest[1]];
        for x in &inputs {
            for y in &inputs {
                let mut auth = Authenticator::new();
                let mut nodes = [LockStepBa::new(N, F, x.clone()), LockStepBa::new(N, F, y.clone())];
                let everyone: Vec<ReplicaId> = (0..N).map(ReplicaId).collect();
                let inflight = (0..2)
                    .map(|k| (nodes[k].start(&mut Key { id: honest[k], auth: &mut auth }), everyone.clone()))
                    .collect();
                let world = World {
                    honest,
                    nodes,
                    inflight,
                    seen: BTreeMap::new(),
                    inputs: [x.clone(), y.clone()],
                    decisions: [None, None],
                    trail: Vec::new(),
                };
                step(world, byz, 1, &mut auth, &mut summary);
            }
        }
    }
    summary
}
