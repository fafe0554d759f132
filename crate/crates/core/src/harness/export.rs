//! Trace files and replay.
//!
//! A trace file is newline-delimited JSON. The first line is a header naming
//! the scenario and seed; every following line is one event record exactly as
//! the simulator emitted it. Replay re-executes the header's scenario and
//! compares the event lines byte for byte.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::exec::execute;
use super::scenario::{Scenario, ScenarioError};
use crate::sim::Trace;

pub const FORMAT: &str = "onedelta-trace";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub scenario: Scenario,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("empty trace file")]
    Empty,
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("not a trace file (format `{0}`)")]
    Format(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// First event line at which a replay differs from the recording.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    /// Zero-based index among event lines.
    pub index: usize,
    pub recorded: Option<String>,
    pub replayed: Option<String>,
}

pub fn write_trace(out: &mut impl Write, scenario: &Scenario, seed: u64, trace: &Trace) -> io::Result<()> {
    let header = TraceHeader { format: FORMAT.into(), version: VERSION, seed, scenario: scenario.clone() };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    trace.write_records(out)
}

pub fn trace_to_string(scenario: &Scenario, seed: u64, trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, scenario, seed, trace).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Re-executes a recorded trace. `Ok(None)` means byte-identical.
pub fn replay(input: impl BufRead) -> Result<Option<Divergence>, ReplayError> {
    let mut lines = input.lines();
    let header_line = lines.next().ok_or(ReplayError::Empty)??;
    let header: TraceHeader = serde_json::from_str(&header_line)?;
    if header.format != FORMAT {
        return Err(ReplayError::Format(header.format));
    }
    header.scenario.validate()?;
    let trace = execute(&header.scenario.run_spec(header.seed)?);
    let replayed = trace.records_ndjson();
    let mut replayed = replayed.lines();
    let mut index = 0;
    loop {
        let recorded = lines.next().transpose()?;
        let fresh = replayed.next();
        match (recorded, fresh) {
            (None, None) => return Ok(None),
            (Some(a), Some(b)) if a == b => index += 1,
            (recorded, fresh) => {
                return Ok(Some(Divergence { index, recorded, replayed: fresh.map(str::to_string) }));
            }
        }
    }
}
