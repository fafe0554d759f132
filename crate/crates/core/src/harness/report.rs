//! Latency measurement and CSV summaries.

use std::collections::BTreeMap;
use std::io;

use serde::Serialize;

use super::check::Violation;
use crate::chain::BlockId;
use crate::protocol::ProtocolId;
use crate::sim::{Note, Tick, Trace};
use crate::types::ReplicaId;

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    /// Largest honest latency on the global clock.
    pub latency: Option<Tick>,
    /// Per honest replica: decision time, or for replication the largest
    /// commit latency of any block.
    pub per_replica: BTreeMap<ReplicaId, Tick>,
    /// Per honest replica: local decision time, or local time of its last commit.
    pub per_replica_local: BTreeMap<ReplicaId, Tick>,
    pub violations: Vec<Violation>,
    pub non_terminating: bool,
    pub end_time: Tick,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Measures latency from a finished trace.
pub fn measure(protocol: ProtocolId, seed: u64, trace: &Trace, violations: Vec<Violation>) -> RunReport {
    let mut per_replica = BTreeMap::new();
    let mut per_replica_local = BTreeMap::new();
    if protocol.is_replication() {
        for (r, latency) in block_latencies(trace) {
            let e = per_replica.entry(r).or_insert(0);
            *e = (*e).max(latency);
        }
        for (rec, note) in trace.honest_notes() {
            if matches!(note, Note::BlockCommitted { .. }) {
                per_replica_local.insert(rec.replica, rec.local);
            }
        }
    } else {
        for (rec, note) in trace.honest_notes() {
            if matches!(note, Note::Decided { .. }) {
                per_replica.entry(rec.replica).or_insert(rec.time);
                per_replica_local.entry(rec.replica).or_insert(rec.local);
            }
        }
    }
    RunReport {
        seed,
        latency: per_replica.values().copied().max(),
        per_replica,
        per_replica_local,
        violations,
        non_terminating: trace.non_terminating,
        end_time: trace.end_time,
    }
}

/// Commit time minus proposal time for every block an honest leader
/// proposed, per honest replica that committed it.
pub fn block_latencies(trace: &Trace) -> Vec<(ReplicaId, Tick)> {
    let mut proposed: BTreeMap<BlockId, Tick> = BTreeMap::new();
    for (rec, note) in trace.honest_notes() {
        if let Note::Proposed { block, .. } = note {
            proposed.entry(*block).or_insert(rec.time);
        }
    }
    trace
        .honest_notes()
        .filter_map(|(rec, note)| match note {
            Note::BlockCommitted { block, .. } => proposed.get(block).map(|&p| (rec.replica, rec.time - p)),
            _ => None,
        })
        .collect()
}

/// One CSV row. The column set is stable.
#[derive(Clone, Debug, Serialize)]
pub struct CsvRow {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub n: usize,
    pub f: usize,
    #[serde(rename = "Delta")]
    pub big_delta: Tick,
    pub delta: Tick,
    pub sigma: Tick,
    pub latency: Option<Tick>,
    pub bound_formula: String,
    pub bound: Tick,
    pub within_bound: bool,
    pub violations: usize,
    pub non_terminating: bool,
    pub end_time: Tick,
}

impl CsvRow {
    pub fn new(scenario: &str, protocol: ProtocolId, trace_cfg: &crate::sim::SimConfig, report: &RunReport) -> Self {
        let (formula, bound) = protocol.good_case_bound(trace_cfg.f, trace_cfg.big_delta, trace_cfg.delta);
        CsvRow {
            scenario: scenario.to_string(),
            protocol: protocol.name().to_string(),
            seed: report.seed,
            n: trace_cfg.n,
            f: trace_cfg.f,
            big_delta: trace_cfg.big_delta,
            delta: trace_cfg.delta,
            sigma: trace_cfg.sigma,
            latency: report.latency,
            bound_formula: formula.to_string(),
            bound,
            within_bound: report.latency.is_some_and(|l| l <= bound),
            violations: report.violations.len(),
            non_terminating: report.non_terminating,
            end_time: report.end_time,
        }
    }
}

pub fn write_csv<W: io::Write>(out: W, rows: &[CsvRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
