use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual time in integer ticks.
pub type Tick = u64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryMode {
    #[default]
    Synchronous,
    MobileLink,
    MobileSluggish,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayPolicy {
    Fixed(Tick),
    UniformRandom,
    #[default]
    AdversarialMax,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub f: usize,
    /// Known delay bound used by the protocols.
    #[serde(rename = "Delta")]
    pub big_delta: Tick,
    /// Actual delay bound enforced by the network; `delta <= Delta`.
    pub delta: Tick,
    /// Maximum start-time skew between replicas.
    #[serde(default)]
    pub sigma: Tick,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub delivery: DeliveryMode,
    #[serde(default)]
    pub delay: DelayPolicy,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("n = {n} must be at least 2f + 1 = {}", 2 * f + 1)]
    Resilience { n: usize, f: usize },
    #[error("delta = {delta} must satisfy 0 < delta <= Delta = {big_delta}")]
    DeltaBound { delta: Tick, big_delta: Tick },
    #[error("fixed delay {0} must lie in [1, delta]")]
    FixedDelay(Tick),
    #[error("{0}")]
    Invalid(String),
}

impl SimConfig {
    pub fn new(n: usize, f: usize, big_delta: Tick, delta: Tick) -> Self {
        SimConfig { n, f, big_delta, delta, sigma: 0, seed: 0, delivery: DeliveryMode::Synchronous, delay: DelayPolicy::AdversarialMax }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 * self.f + 1 {
            return Err(ConfigError::Resilience { n: self.n, f: self.f });
        }
        if self.delta == 0 || self.delta > self.big_delta {
            return Err(ConfigError::DeltaBound { delta: self.delta, big_delta: self.big_delta });
        }
        if let DelayPolicy::Fixed(d) = self.delay {
            if d == 0 || d > self.delta {
                return Err(ConfigError::FixedDelay(d));
            }
        }
        Ok(())
    }
}
