//! Three-group constructions used to argue latency lower bounds, packaged as
//! fault schedules so that they can be replayed against real protocols.
//!
//! Synchronous model, groups P, Q, R of size n/3:
//! * `A`: Q silent, every input is 0.
//! * `B`: P silent, every input is 1.
//! * `C`: R runs one persona towards P (input 0) and another towards Q
//!   (input 1); links between P and Q take Δ; P holds 0 and Q holds 1.
//!
//! Mobile-link model, n = 3f-1, groups A and C of size f-1 and B of size
//! f+1, with every link between A and C permanently down:
//! * `1`: C silent. One member `b` of B ignores input traffic and the rest
//!   of B, sends nothing to the rest of B, and processes A's messages and
//!   emits its own as if each hop took Δ. Every input is 0.
//! * `2`: the mirror image with A silent and every input 1.
//! * `3`: B minus one member `h` is Byzantine and plays scenario 1 towards
//!   A and scenario 2 towards C, staying silent towards `h`. A holds 0, C
//!   holds 1, `h` has no input, and links between honest replicas take Δ.

use std::collections::BTreeMap;

use super::{FaultSchedule, FilterSpec, Strategy};
use crate::sim::{DelayPolicy, LinkAction, LinkBudget, LinkDelay, LinkFault, NetworkFaults, Tick};
use crate::types::{ReplicaId, Value};

fn ids(range: std::ops::Range<usize>) -> Vec<ReplicaId> {
    range.map(ReplicaId).collect()
}

fn all_inputs(n: usize, v: u64) -> Vec<Option<Value>> {
    vec![Some(Value::from_u64(v)); n]
}

/// The groups P, Q, R for a system of `n` replicas.
pub fn sync_groups(n: usize) -> [Vec<ReplicaId>; 3] {
    assert!(n.is_multiple_of(3) && n > 0, "n must be a positive multiple of 3");
    let k = n / 3;
    [ids(0..k), ids(k..2 * k), ids(2 * k..n)]
}

/// Scenarios A, B, C of the synchronous construction. `f = n / 3`.
pub fn lowerbound_sync(n: usize, big_delta: Tick, delta: Tick) -> [FaultSchedule; 3] {
    let [p, q, r] = sync_groups(n);
    let silent = |group: &[ReplicaId]| group.iter().map(|&id| (id, Strategy::Silent)).collect::<BTreeMap<_, _>>();
    let a = FaultSchedule { byzantine: silent(&q), inputs: Some(all_inputs(n, 0)), ..FaultSchedule::default() };
    let b = FaultSchedule { byzantine: silent(&p), inputs: Some(all_inputs(n, 1)), ..FaultSchedule::default() };
    let split = Strategy::SplitBrain {
        groups: [p.clone(), q.clone()],
        inputs: [Some(Value::from_u64(0)), Some(Value::from_u64(1))],
    };
    let mut inputs = all_inputs(n, 0);
    for id in &q {
        inputs[id.0] = Some(Value::from_u64(1));
    }
    let slow = vec![
        LinkDelay { from: p.clone(), to: q.clone(), delay: big_delta },
        LinkDelay { from: q.clone(), to: p.clone(), delay: big_delta },
    ];
    let c = FaultSchedule {
        byzantine: r.iter().map(|&id| (id, split.clone())).collect(),
        inputs: Some(inputs),
        faults: NetworkFaults { delays: slow, ..NetworkFaults::default() },
        delta: Some(big_delta),
        delay: Some(DelayPolicy::Fixed(delta)),
        ..FaultSchedule::default()
    };
    [a, b, c]
}

/// The groups A, B, C for `n = 3f - 1`.
pub fn mlf_groups(f: usize) -> [Vec<ReplicaId>; 3] {
    assert!(f >= 2, "the mobile-link construction needs f >= 2");
    [ids(0..f - 1), ids(f - 1..2 * f), ids(2 * f..3 * f - 1)]
}

fn partition(a: &[ReplicaId], c: &[ReplicaId], until: Tick) -> Vec<LinkFault> {
    let mut links = Vec::new();
    for &x in a {
        for &y in c {
            links.push(LinkFault { from: x, to: y, start: 0, end: until, action: LinkAction::Drop });
            links.push(LinkFault { from: y, to: x, start: 0, end: until, action: LinkAction::Drop });
        }
    }
    links
}

/// Scenarios 1, 2, 3 of the mobile-link construction. The A-C partition
/// lasts until `until`.
pub fn lowerbound_mlf(f: usize, big_delta: Tick, delta: Tick, until: Tick) -> [FaultSchedule; 3] {
    let n = 3 * f - 1;
    let [a, b, c] = mlf_groups(f);
    let budget = Some(LinkBudget { fls: f - 1, flr: f - 1 });
    let faults = NetworkFaults { links: partition(&a, &c, until), link_budget: budget, ..NetworkFaults::default() };
    let delayer = b[0];
    let rest_of_b: Vec<ReplicaId> = b[1..].to_vec();
    let lag = big_delta.saturating_sub(delta);

    let one_sided = |silent: &[ReplicaId], slowed: &[ReplicaId], value: u64| {
        let mut byzantine: BTreeMap<ReplicaId, Strategy> = silent.iter().map(|&id| (id, Strategy::Silent)).collect();
        let spec = FilterSpec {
            ignore_kinds: vec!["input".into()],
            ignore_from: rest_of_b.clone(),
            delay_from: slowed.to_vec(),
            delay: lag,
            no_send_to: rest_of_b.clone(),
            hold: lag,
        };
        byzantine.insert(delayer, Strategy::Filter(spec));
        FaultSchedule { byzantine, faults: faults.clone(), inputs: Some(all_inputs(n, value)), ..FaultSchedule::default() }
    };
    let first = one_sided(&c, &a, 0);
    let second = one_sided(&a, &c, 1);

    let h = *b.last().expect("B is non-empty");
    let mut inputs = all_inputs(n, 0);
    for id in &c {
        inputs[id.0] = Some(Value::from_u64(1));
    }
    inputs[h.0] = None;
    let split = Strategy::SplitBrain {
        groups: [a.clone(), c.clone()],
        inputs: [Some(Value::from_u64(0)), Some(Value::from_u64(1))],
    };
    let honest: Vec<ReplicaId> = a.iter().chain(&c).copied().chain([h]).collect();
    let mut third_faults = faults.clone();
    third_faults.delays = vec![LinkDelay { from: honest.clone(), to: honest, delay: big_delta }];
    let third = FaultSchedule {
        byzantine: b.iter().filter(|&&id| id != h).map(|&id| (id, split.clone())).collect(),
        faults: third_faults,
        inputs: Some(inputs),
        delta: Some(big_delta),
        delay: Some(DelayPolicy::Fixed(delta)),
        ..FaultSchedule::default()
    };
    [first, second, third]
}

/// Looks up a construction by its scenario-file name.
pub fn named(name: &str, n: usize, f: usize, big_delta: Tick, delta: Tick, until: Tick) -> Option<Result<FaultSchedule, String>> {
    let lower = name.to_ascii_lowercase();
    let (family, which) = lower.rsplit_once('-')?;
    let index = match (family, which) {
        ("lb-sync", "a") | ("lb-mlf", "1") => 0,
        ("lb-sync", "b") | ("lb-mlf", "2") => 1,
        ("lb-sync", "c") | ("lb-mlf", "3") => 2,
        _ => return None,
    };
    Some(match family {
        "lb-sync" if n.is_multiple_of(3) && f == n / 3 => Ok(lowerbound_sync(n, big_delta, delta)[index].clone()),
        "lb-sync" => Err(format!("{name} needs n divisible by 3 and f = n/3, got n={n}, f={f}")),
        _ if f >= 2 && n == 3 * f - 1 => Ok(lowerbound_mlf(f, big_delta, delta, until)[index].clone()),
        _ => Err(format!("{name} needs f >= 2 and n = 3f-1, got n={n}, f={f}")),
    })
}
