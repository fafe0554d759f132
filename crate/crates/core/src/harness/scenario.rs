//! Scenario files: one TOML document describes a family of runs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::fuzz::{fuzz_schedule, FuzzOptions};
use crate::adversary::{directed_cycle, lowerbound, FaultSchedule, ScheduleError, Strategy};
use crate::protocol::ba::BaTiming;
use crate::protocol::{ProtocolId, ProtocolSetup, Timing};
use crate::sim::{ConfigError, NetworkFaults, SimConfig, Tick};
use crate::types::{ReplicaId, Value};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("fault schedule for seed {seed}: {source}")]
    Schedule { seed: u64, source: ScheduleError },
    #[error("{0}")]
    Invalid(String),
}

/// How replica inputs are assigned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSpec {
    /// `"same"` gives every replica 0; `"random"` draws 0 or 1 per replica.
    Named(InputMode),
    /// One entry per replica; a negative entry means no input.
    List(Vec<i64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    Same,
    Random,
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec::Named(InputMode::Same)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub sender: usize,
    pub alpha: Tick,
    pub blocks: u64,
    pub views_to_run: Option<u64>,
    pub inputs: InputSpec,
    /// `honest`, or a strategy name for the view-0 leader.
    pub leader_strategy: String,
    /// Overrides the local commit deadline of the agreement protocols.
    pub commit_deadline: Option<Tick>,
    /// Overrides the local fallback start of the agreement protocols.
    pub fallback_start: Option<Tick>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            sender: 0,
            alpha: 5,
            blocks: 10,
            views_to_run: None,
            inputs: InputSpec::default(),
            leader_strategy: "honest".into(),
            commit_deadline: None,
            fallback_start: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultsSpec {
    /// `none`, `silent`, `equivocate`, `delay-max`, `jitter`, `fuzz`,
    /// `worst-cycle`, or a lower-bound construction name.
    pub strategy: String,
    pub byzantine: Vec<usize>,
    /// Recipients of the conflicting version under `equivocate`. Defaults
    /// to the upper half of the replicas.
    pub split: Option<Vec<usize>>,
    pub offsets: Vec<Tick>,
    pub network: NetworkFaults,
    pub fuzz: FuzzOptions,
}

impl Default for FaultsSpec {
    fn default() -> Self {
        FaultsSpec {
            strategy: "none".into(),
            byzantine: Vec::new(),
            split: None,
            offsets: Vec::new(),
            network: NetworkFaults::default(),
            fuzz: FuzzOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    pub suites: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub protocol: ProtocolId,
    #[serde(default = "one")]
    pub runs: u64,
    #[serde(default = "default_horizon")]
    pub horizon: Tick,
    /// Seed of the first run; run `i` uses `seed + i`.
    #[serde(default)]
    pub seed: u64,
    pub sim: SimConfig,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub faults: FaultsSpec,
    #[serde(default)]
    pub check: CheckSpec,
}

fn one() -> u64 {
    1
}

fn default_horizon() -> Tick {
    100_000
}

/// Everything needed to execute one seed.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub seed: u64,
    pub cfg: SimConfig,
    pub setup: ProtocolSetup,
    pub schedule: FaultSchedule,
    pub horizon: Tick,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Scenario::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios serialize")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.sim.validate()?;
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.params.alpha == 0 {
            return invalid("alpha must be positive".into());
        }
        if self.runs == 0 {
            return invalid("runs must be positive".into());
        }
        if self.params.sender >= self.sim.n {
            return invalid(format!("sender {} is outside the system", self.params.sender));
        }
        if let InputSpec::List(list) = &self.params.inputs {
            if list.len() != self.sim.n {
                return invalid(format!("expected {} inputs, got {}", self.sim.n, list.len()));
            }
        }
        self.run_spec(self.seed).map(|_| ())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let base = self.seed;
        (0..self.runs).map(move |i| base.wrapping_add(i))
    }

    /// Effective timing used by the honest replicas.
    pub fn timing(&self) -> Timing {
        let t = Timing { big_delta: self.sim.big_delta, sigma: self.sim.sigma, alpha: self.params.alpha };
        if self.protocol.uses_relay() {
            t.doubled()
        } else {
            t
        }
    }

    fn inputs(&self, rng: &mut ChaCha8Rng) -> Vec<Option<Value>> {
        match &self.params.inputs {
            InputSpec::Named(InputMode::Same) => vec![Some(Value::from_u64(0)); self.sim.n],
            InputSpec::Named(InputMode::Random) => {
                (0..self.sim.n).map(|_| Some(Value::from_u64(rng.gen_range(0..2)))).collect()
            }
            InputSpec::List(list) => {
                list.iter().map(|&v| u64::try_from(v).ok().map(Value::from_u64)).collect()
            }
        }
    }

    fn default_split(&self) -> Vec<ReplicaId> {
        (self.sim.n / 2..self.sim.n).map(ReplicaId).collect()
    }

    fn simple_strategy(&self, name: &str) -> Option<Strategy> {
        match name {
            "silent" => Some(Strategy::Silent),
            "delay-max" => Some(Strategy::DelayMax),
            "jitter" => Some(Strategy::Jitter),
            "equivocate" => Some(Strategy::Equivocate {
                split: self.faults.split.as_ref().map(|s| s.iter().copied().map(ReplicaId).collect()).unwrap_or_else(|| self.default_split()),
            }),
            _ => None,
        }
    }

    fn schedule(&self, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<FaultSchedule, ScenarioError> {
        let name = self.faults.strategy.to_ascii_lowercase();
        let mut schedule = match name.as_str() {
            "none" | "honest" => FaultSchedule::default(),
            "fuzz" => fuzz_schedule(cfg, &self.faults.fuzz, rng),
            "worst-cycle" => {
                let byzantine: Vec<ReplicaId> = (cfg.n - cfg.f..cfg.n).map(ReplicaId).collect();
                let honest: Vec<ReplicaId> = (0..cfg.n - cfg.f).map(ReplicaId).collect();
                FaultSchedule {
                    byzantine: byzantine.into_iter().map(|id| (id, Strategy::Silent)).collect(),
                    faults: directed_cycle(&honest, self.horizon),
                    ..FaultSchedule::default()
                }
            }
            other => match self.simple_strategy(other) {
                Some(strategy) => FaultSchedule {
                    byzantine: self.faults.byzantine.iter().map(|&i| (ReplicaId(i), strategy.clone())).collect(),
                    ..FaultSchedule::default()
                },
                None => match lowerbound::named(other, cfg.n, cfg.f, cfg.big_delta, cfg.delta, self.horizon) {
                    Some(Ok(s)) => s,
                    Some(Err(e)) => return Err(ScenarioError::Invalid(e)),
                    None => return Err(ScenarioError::Invalid(format!("unknown strategy `{}`", self.faults.strategy))),
                },
            },
        };
        let leader = self.params.leader_strategy.to_ascii_lowercase();
        if leader != "honest" {
            let strategy = self
                .simple_strategy(&leader)
                .ok_or_else(|| ScenarioError::Invalid(format!("unknown leader strategy `{leader}`")))?;
            schedule.byzantine.insert(ReplicaId(0), strategy);
        }
        if !self.faults.offsets.is_empty() {
            schedule.offsets = self.faults.offsets.clone();
        }
        let net = &self.faults.network;
        schedule.faults.links.extend(net.links.iter().cloned());
        schedule.faults.sluggish.extend(net.sluggish.iter().cloned());
        schedule.faults.delays.extend(net.delays.iter().cloned());
        if net.link_budget.is_some() {
            schedule.faults.link_budget = net.link_budget;
        }
        Ok(schedule)
    }

    /// Builds the run for `seed`. Fault and input draws use RNG streams
    /// separate from the network's delay stream.
    pub fn run_spec(&self, seed: u64) -> Result<RunSpec, ScenarioError> {
        let mut cfg = self.sim.clone();
        cfg.seed = seed;
        let mut fault_rng = ChaCha8Rng::seed_from_u64(seed);
        fault_rng.set_stream(1);
        let mut input_rng = ChaCha8Rng::seed_from_u64(seed);
        input_rng.set_stream(2);
        let schedule = self.schedule(&cfg, &mut fault_rng)?;
        schedule.adjust(&mut cfg);
        cfg.validate()?;
        schedule.validate(&cfg).map_err(|source| ScenarioError::Schedule { seed, source })?;
        let inputs = self.inputs(&mut input_rng);
        let timing = Timing { big_delta: cfg.big_delta, sigma: cfg.sigma, alpha: self.params.alpha };
        let ba_timing = match (self.params.commit_deadline, self.params.fallback_start) {
            (None, None) => None,
            (deadline, start) => {
                let base = BaTiming::new(if self.protocol.uses_relay() { timing.doubled() } else { timing });
                Some(BaTiming {
                    commit_deadline: deadline.unwrap_or(base.commit_deadline),
                    fallback_start: start.unwrap_or(base.fallback_start),
                    ..base
                })
            }
        };
        let setup = ProtocolSetup {
            protocol: self.protocol,
            n: cfg.n,
            f: cfg.f,
            timing,
            sender: ReplicaId(self.params.sender),
            blocks: self.params.blocks,
            views_to_run: self.params.views_to_run,
            inputs,
            ba_timing,
        };
        Ok(RunSpec { seed, cfg, setup, schedule, horizon: self.horizon })
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
name = "good"
protocol = "1d-ba"
runs = 3
seed = 7

[sim]
n = 5
f = 2
Delta = 10
delta = 1
delay = { fixed = 1 }
"#;

    #[test]
    fn parses_and_assigns_consecutive_seeds() {
        let s = Scenario::from_toml(GOOD).unwrap();
        assert_eq!(s.seeds().collect::<Vec<_>>(), vec![7, 8, 9]);
        assert_eq!(s.run_spec(8).unwrap().cfg.seed, 8);
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::from_toml(GOOD).unwrap();
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_resilience_and_unknown_strategy() {
        assert!(Scenario::from_toml(&GOOD.replace("n = 5", "n = 4")).is_err());
        let bad = format!("{GOOD}\n[faults]\nstrategy = \"teleport\"\n");
        assert!(matches!(Scenario::from_toml(&bad), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn rejects_too_many_byzantine() {
        let bad = format!("{GOOD}\n[faults]\nstrategy = \"silent\"\nbyzantine = [0, 1, 2]\n");
        assert!(matches!(Scenario::from_toml(&bad), Err(ScenarioError::Schedule { .. })));
    }

    #[test]
    fn input_lists_allow_missing_inputs() {
        let s = Scenario::from_toml(&GOOD.replace("seed = 7", "seed = 7\n[params]\ninputs = [0, 1, -1, 0, 0]")).unwrap();
        let spec = s.run_spec(7).unwrap();
        assert_eq!(spec.setup.inputs[1], Some(Value::from_u64(1)));
        assert_eq!(spec.setup.inputs[2], None);
    }
}
