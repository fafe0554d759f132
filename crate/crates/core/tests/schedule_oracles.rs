//! Brute-force oracles for the admissibility checkers and proposal
//! validation. The oracles scan every integer tick or every candidate
//! signature list instead of only the change points the library visits.

use std::collections::BTreeSet;

use onedelta::sim::budget::{check_link_budget, check_sluggish};
use onedelta::sim::{LinkAction, LinkBudget, LinkFault, SluggishInterval, Tick};
use onedelta::types::{value_digest, verify_proposal, Authenticator, Proposal, ReplicaId, SignTag, Signature, Value};
use proptest::prelude::*;

fn link_oracle(links: &[LinkFault], budget: LinkBudget, n: usize, f: usize, delta: Tick) -> bool {
    if budget.fls + budget.flr >= n - f {
        return false;
    }
    let horizon = links.iter().map(|l| l.end + delta).max().unwrap_or(0);
    (0..=horizon).all(|t| {
        let active: BTreeSet<(usize, usize)> =
            links.iter().filter(|l| l.start <= t && t < l.end + delta).map(|l| (l.from.0, l.to.0)).collect();
        (0..n).all(|r| {
            active.iter().filter(|(from, _)| *from == r).count() <= budget.fls
                && active.iter().filter(|(_, to)| *to == r).count() <= budget.flr
        })
    })
}

fn sluggish_oracle(intervals: &[SluggishInterval], honest: &[bool], f: usize) -> Option<usize> {
    let honest_count = honest.iter().filter(|h| **h).count();
    let horizon = intervals.iter().map(|s| s.end).max().unwrap_or(0);
    let mut worst = 0;
    for t in 0..=horizon {
        let slow: BTreeSet<usize> = intervals.iter().filter(|s| s.start <= t && t < s.end).map(|s| s.replica.0).collect();
        if honest_count - slow.len() < f + 1 {
            return None;
        }
        worst = worst.max(slow.len());
    }
    Some(worst)
}

fn link_schedule() -> impl Strategy<Value = (usize, Vec<LinkFault>, LinkBudget, Tick)> {
    (3usize..=6).prop_flat_map(|n| {
        let link = (0..n, 1..n, 0u64..20, 1u64..8).prop_map(move |(from, hop, start, len)| LinkFault {
            from: ReplicaId(from),
            to: ReplicaId((from + hop) % n),
            start,
            end: start + len,
            action: LinkAction::Drop,
        });
        (Just(n), prop::collection::vec(link, 0..6), (0usize..3, 0usize..3), 0u64..4)
            .prop_map(|(n, links, (fls, flr), delta)| (n, links, LinkBudget { fls, flr }, delta))
    })
}

fn sluggish_schedule() -> impl Strategy<Value = (Vec<bool>, Vec<SluggishInterval>)> {
    (3usize..=7).prop_flat_map(|n| {
        let f = (n - 1) / 2;
        let byzantine = prop::sample::subsequence((0..n).collect::<Vec<_>>(), 0..=f);
        byzantine.prop_flat_map(move |byz| {
            let honest: Vec<bool> = (0..n).map(|i| !byz.contains(&i)).collect();
            let ids: Vec<usize> = (0..n).filter(|i| honest[*i]).collect();
            let interval = (prop::sample::select(ids), 0u64..30, 1u64..12)
                .prop_map(|(r, start, len)| SluggishInterval { replica: ReplicaId(r), start, end: start + len });
            (Just(honest), prop::collection::vec(interval, 0..6))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn link_budget_matches_tick_by_tick_scan((n, links, budget, delta) in link_schedule()) {
        let f = (n - 1) / 2;
        prop_assert_eq!(check_link_budget(&links, budget, n, f, delta).is_ok(), link_oracle(&links, budget, n, f, delta));
    }

    #[test]
    fn sluggish_bound_matches_tick_by_tick_scan((honest, intervals) in sluggish_schedule()) {
        let f = (honest.len() - 1) / 2;
        prop_assert_eq!(check_sluggish(&intervals, &honest, f).ok(), sluggish_oracle(&intervals, &honest, f));
    }
}

/// One candidate signature together with what the oracle knows about it.
struct Candidate {
    sig: Signature,
    /// Issued by the authenticator for an input on the proposed value.
    genuine_input: bool,
}

#[test]
fn proposal_validity_matches_exhaustive_oracle() {
    let (n, f) = (3, 1);
    let value = Value::from_u64(0);
    let other = Value::from_u64(1);
    let mut auth = Authenticator::new();
    let input = |v: &Value| value_digest(SignTag::Input, v);
    let mut pool = Vec::new();
    for r in 0..n {
        pool.push(Candidate { sig: auth.sign(ReplicaId(r), input(&value)), genuine_input: true });
    }
    pool.push(Candidate { sig: auth.sign(ReplicaId(0), input(&other)), genuine_input: false });
    pool.push(Candidate { sig: auth.sign(ReplicaId(1), value_digest(SignTag::ValueVote, &value)), genuine_input: false });
    pool.push(Candidate { sig: Signature::fabricate(ReplicaId(1), input(&other)), genuine_input: false });
    pool.push(Candidate { sig: auth.sign(ReplicaId(n), input(&value)), genuine_input: false });

    let mut checked = 0;
    for len in 0..=3 {
        let total = pool.len().pow(len as u32);
        for code in 0..total {
            let picks: Vec<usize> = (0..len).map(|k| code / pool.len().pow(k as u32) % pool.len()).collect();
            let signers: BTreeSet<usize> = picks.iter().map(|&i| pool[i].sig.signer.0).collect();
            let expected = picks.len() == f + 1 && signers.len() == picks.len() && picks.iter().all(|&i| pool[i].genuine_input);
            for v in [value.clone(), Value::Bottom] {
                let p = Proposal { value: v.clone(), signatures: picks.iter().map(|&i| pool[i].sig).collect() };
                assert_eq!(verify_proposal(&auth, &p, n, f), expected && !v.is_bottom(), "picks {picks:?} value {v:?}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 2 * (1 + 7 + 49 + 343));
}

#[test]
fn fabricated_signature_for_unsigned_digest_never_verifies() {
    let mut auth = Authenticator::new();
    let digest = value_digest(SignTag::Input, &Value::from_u64(3));
    auth.sign(ReplicaId(0), digest);
    for who in 1..4 {
        assert!(!auth.verify(&Signature::fabricate(ReplicaId(who), digest), digest));
    }
}
