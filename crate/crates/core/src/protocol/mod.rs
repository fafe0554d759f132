//! Replica state machines and the table of runnable protocols.

pub mod ba;
pub mod bb;
pub mod fallback;
pub mod smr;
pub mod smr_msf;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mlf::MlfNode;
use crate::sim::{Node, Tick};
use crate::types::{ReplicaId, Value};
use ba::{BaMode, BaNode, BaTiming};
use fallback::FallbackNode;
use smr::{SmrNode, SmrParams, SmrVariant};

/// Durations a protocol derives its timers and deadlines from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub big_delta: Tick,
    pub sigma: Tick,
    pub alpha: Tick,
}

impl Timing {
    pub fn doubled(self) -> Timing {
        Timing { big_delta: 2 * self.big_delta, sigma: 2 * self.sigma, alpha: 2 * self.alpha }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProtocolId {
    #[serde(rename = "1d-ba")]
    Ba,
    #[serde(rename = "1d-bb")]
    Bb,
    #[serde(rename = "1d-smr")]
    Smr,
    #[serde(rename = "1d-smr-msf")]
    SmrMsf,
    #[serde(rename = "1d-ba+mlf")]
    BaMlf,
    #[serde(rename = "1d-bb+mlf")]
    BbMlf,
    #[serde(rename = "1d-smr+mlf")]
    SmrMlf,
    #[serde(rename = "fallback-ba")]
    FallbackBa,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 8] = [
        ProtocolId::Ba,
        ProtocolId::Bb,
        ProtocolId::Smr,
        ProtocolId::SmrMsf,
        ProtocolId::BaMlf,
        ProtocolId::BbMlf,
        ProtocolId::SmrMlf,
        ProtocolId::FallbackBa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::Ba => "1d-ba",
            ProtocolId::Bb => "1d-bb",
            ProtocolId::Smr => "1d-smr",
            ProtocolId::SmrMsf => "1d-smr-msf",
            ProtocolId::BaMlf => "1d-ba+mlf",
            ProtocolId::BbMlf => "1d-bb+mlf",
            ProtocolId::SmrMlf => "1d-smr+mlf",
            ProtocolId::FallbackBa => "fallback-ba",
        }
    }

    pub fn is_replication(self) -> bool {
        matches!(self, ProtocolId::Smr | ProtocolId::SmrMsf | ProtocolId::SmrMlf)
    }

    pub fn uses_relay(self) -> bool {
        matches!(self, ProtocolId::BaMlf | ProtocolId::BbMlf | ProtocolId::SmrMlf)
    }

    /// Good-case latency bound as a formula and as ticks.
    pub fn good_case_bound(self, f: usize, big_delta: Tick, delta: Tick) -> (&'static str, Tick) {
        match self {
            ProtocolId::Ba | ProtocolId::Bb | ProtocolId::Smr => ("Delta+2*delta", big_delta + 2 * delta),
            ProtocolId::BaMlf | ProtocolId::BbMlf | ProtocolId::SmrMlf => ("2*Delta+4*delta", 2 * big_delta + 4 * delta),
            ProtocolId::SmrMsf => ("Delta+4*delta", big_delta + 4 * delta),
            ProtocolId::FallbackBa => ("(f+2)*2*Delta", (f as Tick + 2) * 2 * big_delta),
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolId::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let known: Vec<&str> = ProtocolId::ALL.iter().map(|p| p.name()).collect();
            format!("unknown protocol `{s}`; expected one of {}", known.join(", "))
        })
    }
}

/// Everything needed to build an honest replica.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolSetup {
    pub protocol: ProtocolId,
    pub n: usize,
    pub f: usize,
    pub timing: Timing,
    pub sender: ReplicaId,
    pub blocks: u64,
    pub views_to_run: Option<u64>,
    /// Per-replica input; `None` for replicas without one.
    pub inputs: Vec<Option<Value>>,
    /// Replaces the derived agreement deadlines when set.
    pub ba_timing: Option<BaTiming>,
}

impl ProtocolSetup {
    pub fn honest_node(&self, id: ReplicaId) -> Box<dyn Node> {
        let input = self.inputs.get(id.0).cloned().flatten();
        let timing = if self.protocol.uses_relay() { self.timing.doubled() } else { self.timing };
        let ba_timing = self.ba_timing.unwrap_or_else(|| BaTiming::new(timing));
        let smr = SmrParams { alpha: timing.alpha, blocks: self.blocks, views_to_run: self.views_to_run };
        let node: Box<dyn Node> = match self.protocol {
            ProtocolId::Ba | ProtocolId::BaMlf => {
                Box::new(BaNode::new(self.n, self.f, BaMode::Agreement { input }, ba_timing))
            }
            ProtocolId::Bb | ProtocolId::BbMlf => {
                Box::new(BaNode::new(self.n, self.f, BaMode::Broadcast { sender: self.sender, input }, ba_timing))
            }
            ProtocolId::Smr | ProtocolId::SmrMlf => {
                Box::new(SmrNode::new(id, self.n, self.f, SmrVariant::Standard, timing, smr))
            }
            ProtocolId::SmrMsf => Box::new(smr_msf::msf_node(id, self.n, self.f, timing, smr)),
            ProtocolId::FallbackBa => {
                Box::new(FallbackNode::new(self.n, self.f, input.unwrap_or(Value::Bottom), 2 * timing.big_delta))
            }
        };
        if self.protocol.uses_relay() {
            Box::new(MlfNode::new(node))
        } else {
            node
        }
    }
}
