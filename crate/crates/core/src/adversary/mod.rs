//! Byzantine strategies and fault schedules.

pub mod fuzz;
pub mod lowerbound;
pub mod strategy;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::ProtocolSetup;
use crate::sim::{
    budget::{check_link_budget, check_sluggish, BudgetViolation, SluggishViolation},
    DelayPolicy, DeliveryMode, LinkAction, LinkBudget, LinkFault, NetworkFaults, Node, Participant, SimConfig, Tick,
};
use crate::types::{ReplicaId, Value};
use strategy::{ByzantineNode, SilentNode};

/// Behaviour of one Byzantine replica.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Sends nothing.
    Silent,
    /// Follows the protocol but holds every send for Δ.
    DelayMax,
    /// Follows the protocol but holds each send for a random time in `[0, Δ]`.
    Jitter,
    /// Follows the protocol but sends a conflicting version of every value
    /// or block it originates to the replicas in `split`.
    Equivocate { split: Vec<ReplicaId> },
    Filter(FilterSpec),
    /// Runs two honest personas. Persona `k` talks only to `groups[k]` and
    /// starts from `inputs[k]`; coalition traffic is kept on separate lanes.
    SplitBrain { groups: [Vec<ReplicaId>; 2], inputs: [Option<Value>; 2] },
}

/// Follows the protocol over a censored view of the network.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    /// Payload kinds dropped on arrival.
    pub ignore_kinds: Vec<String>,
    /// Origins whose messages are dropped on arrival.
    pub ignore_from: Vec<ReplicaId>,
    /// Origins whose messages are processed `delay` ticks after arrival.
    pub delay_from: Vec<ReplicaId>,
    pub delay: Tick,
    /// Recipients that never receive anything.
    pub no_send_to: Vec<ReplicaId>,
    /// Extra wait before each send leaves this replica.
    pub hold: Tick,
}

/// Everything the adversary controls in one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSchedule {
    pub byzantine: BTreeMap<ReplicaId, Strategy>,
    /// Global start time of each replica. Empty means all start at 0.
    pub offsets: Vec<Tick>,
    pub faults: NetworkFaults,
    /// Replaces the scenario's inputs when set.
    pub inputs: Option<Vec<Option<Value>>>,
    /// Replaces the actual delay bound when set.
    pub delta: Option<Tick>,
    pub delay: Option<DelayPolicy>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("{count} Byzantine replicas exceed f = {f}")]
    TooManyByzantine { count: usize, f: usize },
    #[error("replica {0} is outside the system")]
    UnknownReplica(ReplicaId),
    #[error("start offset {offset} of replica {replica} exceeds sigma = {sigma}")]
    Skew { replica: ReplicaId, offset: Tick, sigma: Tick },
    #[error("expected {n} start offsets, got {got}")]
    OffsetCount { n: usize, got: usize },
    #[error("link faults need the mobile-link delivery mode")]
    LinksOutsideMode,
    #[error("link faults need a link budget")]
    MissingBudget,
    #[error(transparent)]
    Link(#[from] BudgetViolation),
    #[error("sluggish intervals need the mobile-sluggish delivery mode")]
    SluggishOutsideMode,
    #[error(transparent)]
    Sluggish(#[from] SluggishViolation),
}

impl FaultSchedule {
    pub fn honest() -> Self {
        FaultSchedule::default()
    }

    pub fn is_honest(&self, id: ReplicaId) -> bool {
        !self.byzantine.contains_key(&id)
    }

    pub fn honest_mask(&self, n: usize) -> Vec<bool> {
        (0..n).map(|i| self.is_honest(ReplicaId(i))).collect()
    }

    pub fn offsets_for(&self, n: usize) -> Vec<Tick> {
        if self.offsets.is_empty() {
            vec![0; n]
        } else {
            self.offsets.clone()
        }
    }

    /// Applies the schedule's overrides to a simulator configuration.
    pub fn adjust(&self, cfg: &mut SimConfig) {
        if let Some(delta) = self.delta {
            cfg.delta = delta;
        }
        if let Some(delay) = self.delay {
            cfg.delay = delay;
        }
    }

    pub fn validate(&self, cfg: &SimConfig) -> Result<(), ScheduleError> {
        let (n, f) = (cfg.n, cfg.f);
        if self.byzantine.len() > f {
            return Err(ScheduleError::TooManyByzantine { count: self.byzantine.len(), f });
        }
        if let Some(bad) = self.byzantine.keys().find(|r| r.0 >= n) {
            return Err(ScheduleError::UnknownReplica(*bad));
        }
        if !self.offsets.is_empty() {
            if self.offsets.len() != n {
                return Err(ScheduleError::OffsetCount { n, got: self.offsets.len() });
            }
            if let Some((i, &o)) = self.offsets.iter().enumerate().find(|(_, &o)| o > cfg.sigma) {
                return Err(ScheduleError::Skew { replica: ReplicaId(i), offset: o, sigma: cfg.sigma });
            }
        }
        if let Some(bad) = self.faults.links.iter().flat_map(|l| [l.from, l.to]).find(|r| r.0 >= n) {
            return Err(ScheduleError::UnknownReplica(bad));
        }
        if !self.faults.links.is_empty() {
            if cfg.delivery != DeliveryMode::MobileLink {
                return Err(ScheduleError::LinksOutsideMode);
            }
            let budget = self.faults.link_budget.ok_or(ScheduleError::MissingBudget)?;
            check_link_budget(&self.faults.links, budget, n, f, cfg.delta)?;
        }
        if !self.faults.sluggish.is_empty() {
            if cfg.delivery != DeliveryMode::MobileSluggish {
                return Err(ScheduleError::SluggishOutsideMode);
            }
            check_sluggish(&self.faults.sluggish, &self.honest_mask(n), f)?;
        }
        Ok(())
    }

    /// One participant per replica. Byzantine replicas wrap honest personas
    /// built from `setup`; their randomness derives from `seed`.
    pub fn participants(&self, setup: &ProtocolSetup, seed: u64) -> Vec<Participant> {
        let mut setup = setup.clone();
        if let Some(inputs) = &self.inputs {
            setup.inputs = inputs.clone();
        }
        let coalition: BTreeSet<ReplicaId> = self.byzantine.keys().copied().collect();
        (0..setup.n)
            .map(ReplicaId)
            .map(|id| match self.byzantine.get(&id) {
                None => Participant { node: setup.honest_node(id), honest: true },
                Some(strategy) => {
                    Participant { node: byzantine_node(&setup, id, strategy, &coalition, seed), honest: false }
                }
            })
            .collect()
    }
}

fn byzantine_node(
    setup: &ProtocolSetup,
    id: ReplicaId,
    strategy: &Strategy,
    coalition: &BTreeSet<ReplicaId>,
    seed: u64,
) -> Box<dyn Node> {
    let personas: Vec<Box<dyn Node>> = match strategy {
        Strategy::Silent => return Box::new(SilentNode),
        Strategy::SplitBrain { inputs, .. } => inputs
            .iter()
            .map(|input| {
                let mut s = setup.clone();
                s.inputs[id.0] = input.clone();
                s.honest_node(id)
            })
            .collect(),
        _ => vec![setup.honest_node(id)],
    };
    let rng = ChaCha8Rng::seed_from_u64(seed ^ (id.0 as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    Box::new(ByzantineNode::new(personas, strategy.clone(), coalition.clone(), setup.timing.big_delta, rng))
}

/// Permanent faults on the directed cycle `honest[0] -> honest[1] -> honest[2] -> honest[0]`.
/// Each replica loses one send and one receive link, so a budget of one
/// faulty link per side admits it.
pub fn directed_cycle(honest: &[ReplicaId], until: Tick) -> NetworkFaults {
    assert!(honest.len() >= 3, "a cycle needs three replicas");
    let links = (0..3)
        .map(|i| LinkFault { from: honest[i], to: honest[(i + 1) % 3], start: 0, end: until, action: LinkAction::Drop })
        .collect();
    NetworkFaults { links, link_budget: Some(LinkBudget { fls: 1, flr: 1 }), ..NetworkFaults::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, f: usize) -> SimConfig {
        let mut c = SimConfig::new(n, f, 10, 1);
        c.sigma = 10;
        c.delivery = DeliveryMode::MobileLink;
        c
    }

    #[test]
    fn rejects_more_byzantine_than_f() {
        let mut s = FaultSchedule::honest();
        for i in 0..3 {
            s.byzantine.insert(ReplicaId(i), Strategy::Silent);
        }
        assert_eq!(s.validate(&cfg(5, 2)), Err(ScheduleError::TooManyByzantine { count: 3, f: 2 }));
    }

    #[test]
    fn rejects_skew_beyond_sigma() {
        let s = FaultSchedule { offsets: vec![0, 11, 0], ..FaultSchedule::default() };
        assert!(matches!(s.validate(&cfg(3, 1)), Err(ScheduleError::Skew { .. })));
    }

    #[test]
    fn cycle_fits_a_unit_budget() {
        let ids: Vec<ReplicaId> = (0..3).map(ReplicaId).collect();
        let s = FaultSchedule { faults: directed_cycle(&ids, 1000), ..FaultSchedule::default() };
        assert_eq!(s.validate(&cfg(5, 2)), Ok(()));
    }

    #[test]
    fn over_budget_links_are_rejected() {
        let mut faults = directed_cycle(&[ReplicaId(0), ReplicaId(1), ReplicaId(2)], 1000);
        faults.links.push(LinkFault { from: ReplicaId(0), to: ReplicaId(2), start: 5, end: 6, action: LinkAction::Drop });
        let s = FaultSchedule { faults, ..FaultSchedule::default() };
        assert!(matches!(s.validate(&cfg(5, 2)), Err(ScheduleError::Link(_))));
    }
}
