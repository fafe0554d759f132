//! Random fault schedules drawn from a run seed.

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FaultSchedule, Strategy};
use crate::sim::budget::{check_link_budget, check_sluggish};
use crate::sim::{LinkAction, LinkBudget, LinkFault, SimConfig, SluggishInterval, Tick};
use crate::types::ReplicaId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Silent,
    Equivocate,
    DelayMax,
    Jitter,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzOptions {
    pub strategies: Vec<StrategyKind>,
    /// Draw start offsets in `[0, sigma]`.
    pub skew: bool,
    /// Draw link faults admissible under this budget.
    pub links: Option<LinkBudget>,
    /// Draw sluggish intervals keeping f+1 honest replicas prompt.
    pub sluggish: bool,
    /// Faults start before this time.
    pub window: Tick,
}

impl Default for FuzzOptions {
    fn default() -> Self {
        FuzzOptions {
            strategies: vec![StrategyKind::Silent, StrategyKind::Equivocate, StrategyKind::DelayMax],
            skew: true,
            links: None,
            sluggish: false,
            window: 200,
        }
    }
}

fn draw_strategy(kind: StrategyKind, n: usize, rng: &mut ChaCha8Rng) -> Strategy {
    match kind {
        StrategyKind::Silent => Strategy::Silent,
        StrategyKind::DelayMax => Strategy::DelayMax,
        StrategyKind::Jitter => Strategy::Jitter,
        StrategyKind::Equivocate => {
            let split = (0..n).map(ReplicaId).filter(|_| rng.gen_bool(0.5)).collect();
            Strategy::Equivocate { split }
        }
    }
}

fn draw_links(cfg: &SimConfig, budget: LinkBudget, window: Tick, rng: &mut ChaCha8Rng) -> Vec<LinkFault> {
    let mut links: Vec<LinkFault> = Vec::new();
    let big = cfg.big_delta.max(1);
    for _ in 0..rng.gen_range(0..=3 * cfg.n) {
        let from = rng.gen_range(0..cfg.n);
        let to = (0..cfg.n).filter(|&t| t != from).choose(rng).expect("n >= 2");
        let start = rng.gen_range(0..window.max(1));
        let end = start + rng.gen_range(1..=4 * big);
        let action = if rng.gen_bool(0.5) { LinkAction::Drop } else { LinkAction::Delay(rng.gen_range(1..=4 * big)) };
        links.push(LinkFault { from: ReplicaId(from), to: ReplicaId(to), start, end, action });
        if check_link_budget(&links, budget, cfg.n, cfg.f, cfg.delta).is_err() {
            links.pop();
        }
    }
    links
}

fn draw_sluggish(cfg: &SimConfig, honest: &[bool], window: Tick, rng: &mut ChaCha8Rng) -> Vec<SluggishInterval> {
    let candidates: Vec<ReplicaId> = (0..cfg.n).filter(|&i| honest[i]).map(ReplicaId).collect();
    let mut intervals = Vec::new();
    let big = cfg.big_delta.max(1);
    for _ in 0..rng.gen_range(0..=2 * cfg.n) {
        let Some(&replica) = candidates.choose(rng) else { break };
        let start = rng.gen_range(0..window.max(1));
        let end = start + rng.gen_range(1..=6 * big);
        intervals.push(SluggishInterval { replica, start, end });
        if check_sluggish(&intervals, honest, cfg.f).is_err() {
            intervals.pop();
        }
    }
    intervals
}

/// Draws a schedule that passes [`FaultSchedule::validate`] for `cfg`.
pub fn fuzz_schedule(cfg: &SimConfig, opts: &FuzzOptions, rng: &mut ChaCha8Rng) -> FaultSchedule {
    let mut schedule = FaultSchedule::default();
    let count = rng.gen_range(0..=cfg.f);
    let chosen = (0..cfg.n).choose_multiple(rng, count);
    for id in chosen {
        let kind = opts.strategies.choose(rng).copied().unwrap_or(StrategyKind::Silent);
        schedule.byzantine.insert(ReplicaId(id), draw_strategy(kind, cfg.n, rng));
    }
    if opts.skew {
        schedule.offsets = (0..cfg.n).map(|_| rng.gen_range(0..=cfg.sigma)).collect();
    }
    if let Some(budget) = opts.links {
        schedule.faults.link_budget = Some(budget);
        schedule.faults.links = draw_links(cfg, budget, opts.window, rng);
    }
    if opts.sluggish {
        let honest = schedule.honest_mask(cfg.n);
        schedule.faults.sluggish = draw_sluggish(cfg, &honest, opts.window, rng);
    }
    schedule
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::DeliveryMode;
    use rand::SeedableRng;

    #[test]
    fn drawn_schedules_are_admissible() {
        for (mode, links, sluggish) in [
            (DeliveryMode::Synchronous, None, false),
            (DeliveryMode::MobileLink, Some(LinkBudget { fls: 1, flr: 1 }), false),
            (DeliveryMode::MobileSluggish, None, true),
        ] {
            let mut cfg = SimConfig::new(5, 2, 10, 2);
            cfg.sigma = 10;
            cfg.delivery = mode;
            let opts = FuzzOptions { links, sluggish, ..FuzzOptions::default() };
            for seed in 0..200 {
                let s = fuzz_schedule(&cfg, &opts, &mut ChaCha8Rng::seed_from_u64(seed));
                assert_eq!(s.validate(&cfg), Ok(()), "seed {seed}");
            }
        }
    }

    #[test]
    fn same_seed_same_schedule() {
        let cfg = SimConfig { sigma: 10, ..SimConfig::new(7, 3, 10, 1) };
        let draw = |seed| fuzz_schedule(&cfg, &FuzzOptions::default(), &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(draw(42), draw(42));
    }
}
