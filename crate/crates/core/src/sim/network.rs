//! Delivery models: synchronous, mobile link failures, mobile sluggishness.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DelayPolicy, DeliveryMode, SimConfig, Tick};
use crate::types::ReplicaId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkAction {
    #[default]
    Drop,
    Delay(Tick),
}

/// Directed link `from -> to` is faulty on `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFault {
    pub from: ReplicaId,
    pub to: ReplicaId,
    pub start: Tick,
    pub end: Tick,
    #[serde(default)]
    pub action: LinkAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub fls: usize,
    pub flr: usize,
}

/// `replica` is sluggish on `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SluggishInterval {
    pub replica: ReplicaId,
    pub start: Tick,
    pub end: Tick,
}

/// Fixed delay on every link from a replica in `from` to one in `to`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDelay {
    pub from: Vec<ReplicaId>,
    pub to: Vec<ReplicaId>,
    pub delay: Tick,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkFaults {
    #[serde(default)]
    pub links: Vec<LinkFault>,
    #[serde(default)]
    pub link_budget: Option<LinkBudget>,
    #[serde(default)]
    pub sluggish: Vec<SluggishInterval>,
    #[serde(default)]
    pub delays: Vec<LinkDelay>,
}

impl NetworkFaults {
    pub fn prompt_at(&self, replica: ReplicaId, t: Tick) -> bool {
        !self.sluggish.iter().any(|s| s.replica == replica && s.start <= t && t < s.end)
    }

    /// Earliest instant `>= t` at which `replica` is prompt.
    pub fn first_prompt_from(&self, replica: ReplicaId, t: Tick) -> Tick {
        let mut cur = t;
        loop {
            match self.sluggish.iter().find(|s| s.replica == replica && s.start <= cur && cur < s.end) {
                Some(s) => cur = s.end,
                None => return cur,
            }
        }
    }

    fn prompt_throughout(&self, replica: ReplicaId, from: Tick, to: Tick) -> bool {
        !self.sluggish.iter().any(|s| s.replica == replica && s.start <= to && from < s.end)
    }

    pub fn link_fault_at(&self, from: ReplicaId, to: ReplicaId, t: Tick) -> Option<LinkAction> {
        self.links.iter().find(|l| l.from == from && l.to == to && l.start <= t && t < l.end).map(|l| l.action)
    }

    fn delay_override(&self, from: ReplicaId, to: ReplicaId) -> Option<Tick> {
        self.delays.iter().find(|d| d.from.contains(&from) && d.to.contains(&to)).map(|d| d.delay)
    }
}

/// Computes delivery instants for one run. Owns the run's delay RNG.
pub struct Network {
    mode: DeliveryMode,
    policy: DelayPolicy,
    big_delta: Tick,
    delta: Tick,
    faults: NetworkFaults,
    rng: ChaCha8Rng,
}

impl Network {
    pub fn new(cfg: &SimConfig, faults: NetworkFaults, rng: ChaCha8Rng) -> Self {
        Network { mode: cfg.delivery, policy: cfg.delay, big_delta: cfg.big_delta, delta: cfg.delta, faults, rng }
    }

    pub fn faults(&self) -> &NetworkFaults {
        &self.faults
    }

    fn policy_delay(&mut self) -> Tick {
        match self.policy {
            DelayPolicy::Fixed(d) => d,
            DelayPolicy::UniformRandom => self.rng.gen_range(1..=self.delta),
            DelayPolicy::AdversarialMax => self.delta,
        }
    }

    /// Delivery instant of a message put on the wire at `at`, or `None`
    /// when it is dropped. Self-delivery is immediate.
    pub fn delivery_time(&mut self, from: ReplicaId, to: ReplicaId, at: Tick) -> Option<Tick> {
        if from == to {
            return Some(at);
        }
        let base = match self.faults.delay_override(from, to) {
            Some(d) => d,
            None => self.policy_delay(),
        };
        match self.mode {
            DeliveryMode::Synchronous => Some(at + base),
            DeliveryMode::MobileLink => match self.faults.link_fault_at(from, to, at) {
                None => Some(at + base),
                Some(LinkAction::Drop) => None,
                Some(LinkAction::Delay(extra)) => Some(at + extra.max(1)),
            },
            DeliveryMode::MobileSluggish => Some(self.sluggish_delivery(from, to, at, base)),
        }
    }

    fn sluggish_delivery(&self, from: ReplicaId, to: ReplicaId, at: Tick, base: Tick) -> Tick {
        let start = self.faults.first_prompt_from(from, at);
        if self.policy == DelayPolicy::AdversarialMax {
            let unaffected = start == at && self.faults.prompt_throughout(to, at, at + self.delta);
            if unaffected {
                return at + base;
            }
            return self.faults.first_prompt_from(to, start + self.big_delta);
        }
        self.faults.first_prompt_from(to, start + base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn net(mode: DeliveryMode, policy: DelayPolicy, delta: Tick, faults: NetworkFaults) -> Network {
        let mut cfg = SimConfig::new(3, 1, 10, delta);
        cfg.delivery = mode;
        cfg.delay = policy;
        Network::new(&cfg, faults, ChaCha8Rng::seed_from_u64(1))
    }

    const A: ReplicaId = ReplicaId(0);
    const B: ReplicaId = ReplicaId(1);

    #[test]
    fn synchronous_fixed_delay() {
        let mut n = net(DeliveryMode::Synchronous, DelayPolicy::Fixed(1), 1, NetworkFaults::default());
        assert_eq!(n.delivery_time(A, B, 5), Some(6));
        assert_eq!(n.delivery_time(A, A, 5), Some(5));
    }

    #[test]
    fn uniform_delays_stay_within_delta() {
        let mut n = net(DeliveryMode::Synchronous, DelayPolicy::UniformRandom, 4, NetworkFaults::default());
        for t in 0..200 {
            let d = n.delivery_time(A, B, t).unwrap() - t;
            assert!((1..=4).contains(&d));
        }
    }

    #[test]
    fn faulty_link_drops_and_healthy_link_delivers_within_delta() {
        let faults = NetworkFaults {
            links: vec![LinkFault { from: A, to: B, start: 5, end: 6, action: LinkAction::Drop }],
            ..Default::default()
        };
        let mut n = net(DeliveryMode::MobileLink, DelayPolicy::AdversarialMax, 2, faults);
        assert_eq!(n.delivery_time(A, B, 5), None);
        assert_eq!(n.delivery_time(A, B, 6), Some(8));
        assert_eq!(n.delivery_time(B, A, 5), Some(7));
    }

    #[test]
    fn sluggish_all_prompt_reduces_to_synchronous() {
        let mut n = net(DeliveryMode::MobileSluggish, DelayPolicy::Fixed(1), 1, NetworkFaults::default());
        assert_eq!(n.delivery_time(A, B, 5), Some(6));
    }

    #[test]
    fn sluggish_receiver_waits_for_prompt_instant() {
        let faults = NetworkFaults {
            sluggish: vec![SluggishInterval { replica: B, start: 5, end: 20 }],
            ..Default::default()
        };
        let mut n = net(DeliveryMode::MobileSluggish, DelayPolicy::AdversarialMax, 1, faults);
        assert_eq!(n.delivery_time(A, B, 5), Some(20));
    }

    #[test]
    fn sluggish_sender_delays_envelope_start() {
        let faults = NetworkFaults {
            sluggish: vec![SluggishInterval { replica: A, start: 5, end: 8 }],
            ..Default::default()
        };
        let mut n = net(DeliveryMode::MobileSluggish, DelayPolicy::Fixed(1), 1, faults);
        assert_eq!(n.delivery_time(A, B, 5), Some(9));
    }
}
