//! Admissibility checks for link-failure and sluggishness schedules.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use super::config::Tick;
use super::network::{LinkBudget, LinkFault, SluggishInterval};
use crate::types::ReplicaId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetSide {
    Send,
    Receive,
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
pub enum BudgetViolation {
    #[error("fls + flr = {total} is not below n - f = {bound}")]
    Total { total: usize, bound: usize },
    #[error("replica {replica} has {count} faulty {side:?} links at t={time}, budget {budget}")]
    PerReplica { time: Tick, replica: ReplicaId, side: BudgetSide, count: usize, budget: usize },
    #[error("link {from}->{to} has an empty or inverted interval")]
    Malformed { from: ReplicaId, to: ReplicaId },
}

/// Scans every change point of the schedule. A link faulty on `[a, b)`
/// counts against both endpoints on `[a, b + delta)`.
pub fn check_link_budget(
    links: &[LinkFault],
    budget: LinkBudget,
    n: usize,
    f: usize,
    delta: Tick,
) -> Result<(), BudgetViolation> {
    let bound = n - f;
    if budget.fls + budget.flr >= bound {
        return Err(BudgetViolation::Total { total: budget.fls + budget.flr, bound });
    }
    if let Some(bad) = links.iter().find(|l| l.end <= l.start) {
        return Err(BudgetViolation::Malformed { from: bad.from, to: bad.to });
    }
    let points: BTreeSet<Tick> = links.iter().flat_map(|l| [l.start, l.end + delta]).collect();
    for &t in &points {
        let active: BTreeSet<(ReplicaId, ReplicaId)> = links
            .iter()
            .filter(|l| l.start <= t && t < l.end + delta)
            .map(|l| (l.from, l.to))
            .collect();
        let mut sends: BTreeMap<ReplicaId, usize> = BTreeMap::new();
        let mut recvs: BTreeMap<ReplicaId, usize> = BTreeMap::new();
        for (from, to) in &active {
            *sends.entry(*from).or_default() += 1;
            *recvs.entry(*to).or_default() += 1;
        }
        let over = |counts: &BTreeMap<ReplicaId, usize>, cap: usize| counts.iter().find(|(_, &c)| c > cap).map(|(&r, &c)| (r, c));
        if let Some((replica, count)) = over(&sends, budget.fls) {
            return Err(BudgetViolation::PerReplica { time: t, replica, side: BudgetSide::Send, count, budget: budget.fls });
        }
        if let Some((replica, count)) = over(&recvs, budget.flr) {
            return Err(BudgetViolation::PerReplica { time: t, replica, side: BudgetSide::Receive, count, budget: budget.flr });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
pub enum SluggishViolation {
    #[error("only {prompt} honest replicas are prompt at t={time}; need {needed}")]
    TooFewPrompt { time: Tick, prompt: usize, needed: usize },
    #[error("replica {0} is Byzantine; only honest replicas can be sluggish")]
    NotHonest(ReplicaId),
    #[error("replica {0} has an empty or inverted sluggish interval")]
    Malformed(ReplicaId),
}

/// Verifies that at least f+1 honest replicas are prompt at every instant.
/// Returns the largest number of simultaneously sluggish replicas.
pub fn check_sluggish(intervals: &[SluggishInterval], honest: &[bool], f: usize) -> Result<usize, SluggishViolation> {
    if let Some(s) = intervals.iter().find(|s| !honest.get(s.replica.0).copied().unwrap_or(false)) {
        return Err(SluggishViolation::NotHonest(s.replica));
    }
    if let Some(s) = intervals.iter().find(|s| s.end <= s.start) {
        return Err(SluggishViolation::Malformed(s.replica));
    }
    let honest_count = honest.iter().filter(|h| **h).count();
    let mut worst = 0;
    let points: BTreeSet<Tick> = std::iter::once(0).chain(intervals.iter().map(|s| s.start)).collect();
    for &t in &points {
        let sluggish: BTreeSet<ReplicaId> =
            intervals.iter().filter(|s| s.start <= t && t < s.end).map(|s| s.replica).collect();
        worst = worst.max(sluggish.len());
        let prompt = honest_count - sluggish.len();
        if prompt < f + 1 {
            return Err(SluggishViolation::TooFewPrompt { time: t, prompt, needed: f + 1 });
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::network::LinkAction;

    fn fault(from: usize, to: usize, start: Tick, end: Tick) -> LinkFault {
        LinkFault { from: ReplicaId(from), to: ReplicaId(to), start, end, action: LinkAction::Drop }
    }

    #[test]
    fn no_faults_is_fine() {
        assert!(check_link_budget(&[], LinkBudget { fls: 1, flr: 1 }, 5, 2, 1).is_ok());
    }

    #[test]
    fn total_budget_must_stay_below_n_minus_f() {
        let err = check_link_budget(&[], LinkBudget { fls: 2, flr: 1 }, 5, 2, 1).unwrap_err();
        assert_eq!(err, BudgetViolation::Total { total: 3, bound: 3 });
    }

    #[test]
    fn recovered_link_keeps_counting_for_delta() {
        // 0->1 faulty on [0,2), 0->2 faulty on [3,4). With delta = 2 the
        // first still counts at t=3, so replica 0 has two faulty send links.
        let links = [fault(0, 1, 0, 2), fault(0, 2, 3, 4)];
        let budget = LinkBudget { fls: 1, flr: 1 };
        let err = check_link_budget(&links, budget, 5, 2, 2).unwrap_err();
        assert!(matches!(err, BudgetViolation::PerReplica { time: 3, side: BudgetSide::Send, count: 2, .. }));
        assert!(check_link_budget(&links, budget, 5, 2, 1).is_ok());
    }

    #[test]
    fn sluggish_check_counts_honest_prompt() {
        let honest = [true, true, true, true, false];
        let one = [SluggishInterval { replica: ReplicaId(0), start: 0, end: 10 }];
        assert_eq!(check_sluggish(&one, &honest, 2), Ok(1));
        let two = [
            SluggishInterval { replica: ReplicaId(0), start: 0, end: 10 },
            SluggishInterval { replica: ReplicaId(1), start: 5, end: 6 },
        ];
        assert!(matches!(check_sluggish(&two, &honest, 2), Err(SluggishViolation::TooFewPrompt { time: 5, .. })));
        let byz = [SluggishInterval { replica: ReplicaId(4), start: 0, end: 1 }];
        assert_eq!(check_sluggish(&byz, &honest, 2), Err(SluggishViolation::NotHonest(ReplicaId(4))));
    }
}
