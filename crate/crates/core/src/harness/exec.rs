//! Running scenarios, one seed at a time or in batches.

use super::check::{run_checks, Check, CheckContext};
use super::report::{measure, RunReport};
use super::scenario::{RunSpec, Scenario, ScenarioError};
use crate::sim::{Simulation, Trace};

/// Executes one run.
pub fn execute(spec: &RunSpec) -> Trace {
    let participants = spec.schedule.participants(&spec.setup, spec.seed);
    let offsets = spec.schedule.offsets_for(spec.cfg.n);
    Simulation::new(spec.cfg.clone(), participants, offsets, spec.schedule.faults.clone(), spec.horizon).run()
}

pub fn check_context(scenario: &Scenario) -> CheckContext {
    CheckContext {
        protocol: scenario.protocol,
        timing: scenario.timing(),
        blocks: scenario.params.blocks,
        sender: crate::types::ReplicaId(scenario.params.sender),
    }
}

/// Runs `seed` and evaluates `checks` on its trace.
pub fn run_seed(scenario: &Scenario, seed: u64, checks: &[Check]) -> Result<(Trace, RunReport), ScenarioError> {
    let spec = scenario.run_spec(seed)?;
    let trace = execute(&spec);
    let violations = run_checks(&check_context(scenario), &trace, checks);
    let report = measure(scenario.protocol, seed, &trace, violations);
    Ok((trace, report))
}

/// Applies `job` to every seed on the current thread. Output is sorted by seed.
pub fn run_batch_sequential<T, F>(seeds: &[u64], job: F) -> Vec<(u64, T)>
where
    F: Fn(u64) -> T,
{
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.into_iter().map(|s| (s, job(s))).collect()
}

/// Applies `job` to every seed on the rayon pool. Output is sorted by seed.
#[cfg(feature = "parallel")]
pub fn run_batch_parallel<T, F>(seeds: &[u64], job: F) -> Vec<(u64, T)>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    use rayon::prelude::*;
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.into_par_iter().map(|s| (s, job(s))).collect()
}

/// Parallel when the `parallel` feature is enabled, sequential otherwise.
pub fn run_batch<T, F>(seeds: &[u64], job: F) -> Vec<(u64, T)>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(seeds, job)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(seeds, job)
    }
}

/// Runs every seed of the scenario and returns one report per seed.
pub fn run_scenario(scenario: &Scenario, checks: &[Check]) -> Result<Vec<RunReport>, ScenarioError> {
    let seeds: Vec<u64> = scenario.seeds().collect();
    run_batch(&seeds, |seed| run_seed(scenario, seed, checks).map(|(_, report)| report))
        .into_iter()
        .map(|(_, r)| r)
        .collect()
}
