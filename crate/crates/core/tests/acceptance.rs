//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::io::Cursor;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use common::fallback_enum::{self, F as ENUM_F};
use common::{load, lower_bound};
use onedelta::harness::check::Check;
use onedelta::harness::export::{replay, trace_to_string};
use onedelta::harness::report::RunReport;
use onedelta::harness::{run_batch, run_seed, Scenario};
use onedelta::protocol::fallback::LockStepBa;
use onedelta::sim::{CommitPath, Note, Tick, Trace, TraceEvent};
use onedelta::types::{ReplicaId, Value};

/// Counts every run executed by the suite and every run whose exported
/// trace replayed byte for byte.
#[derive(Default)]
struct Replays {
    runs: AtomicUsize,
    identical: AtomicUsize,
}

type Inspect<'a> = &'a (dyn Fn(&Trace, &RunReport) -> Result<(), String> + Sync);

struct Suite {
    runs: usize,
    failures: Vec<String>,
}

impl Suite {
    fn detail(&self) -> String {
        match self.failures.first() {
            None => format!("{} runs clean", self.runs),
            Some(first) => format!("{} of {} runs failed, first: {first}", self.failures.len(), self.runs),
        }
    }
}

fn suites_of(s: &Scenario) -> Vec<Check> {
    s.check.suites.iter().map(|n| n.parse().expect("known check")).collect()
}

/// Runs every seed of `s`, evaluates its configured checks and `inspect`,
/// and round-trips each trace through export and replay.
fn sweep(s: &Scenario, replays: &Replays, inspect: Inspect<'_>) -> Suite {
    let checks = suites_of(s);
    let seeds: Vec<u64> = s.seeds().collect();
    let results = run_batch(&seeds, |seed| -> Result<(), String> {
        let (trace, report) = run_seed(s, seed, &checks).map_err(|e| e.to_string())?;
        replays.runs.fetch_add(1, Ordering::Relaxed);
        let text = trace_to_string(s, seed, &trace);
        match replay(Cursor::new(text)) {
            Ok(None) => {
                replays.identical.fetch_add(1, Ordering::Relaxed);
            }
            Ok(Some(d)) => return Err(format!("seed {seed}: replay diverged at event {}", d.index)),
            Err(e) => return Err(format!("seed {seed}: replay failed: {e}")),
        }
        if let Some(v) = report.violations.first() {
            return Err(format!("seed {seed}: {}: {}", v.check, v.message));
        }
        inspect(&trace, &report).map_err(|e| format!("seed {seed}: {e}"))
    });
    Suite { runs: results.len(), failures: results.into_iter().filter_map(|(_, r)| r.err()).collect() }
}

fn decisions(trace: &Trace) -> Vec<(ReplicaId, Value, CommitPath, Tick)> {
    trace
        .honest_notes()
        .filter_map(|(rec, note)| match note {
            Note::Decided { value, path } => Some((rec.replica, value.clone(), *path, rec.time)),
            _ => None,
        })
        .collect()
}

fn every_honest_decides_at(trace: &Trace, at: Tick, path: Option<CommitPath>) -> Result<(), String> {
    let got = decisions(trace);
    if got.len() != trace.honest_ids().count() {
        return Err(format!("{} of {} honest replicas decided", got.len(), trace.honest_ids().count()));
    }
    match got.iter().find(|(_, _, p, t)| *t != at || path.is_some_and(|want| want != *p)) {
        Some((r, _, p, t)) => Err(format!("replica {r:?} decided at {t} via {p:?}, want {at}")),
        None => Ok(()),
    }
}

/// Commit time minus proposal time for every (replica, block) pair,
/// computed straight from the notes.
fn commit_latencies(trace: &Trace) -> Vec<Tick> {
    let mut proposed = BTreeMap::new();
    for (rec, note) in trace.honest_notes() {
        if let Note::Proposed { block, .. } = note {
            proposed.entry(*block).or_insert(rec.time);
        }
    }
    trace
        .honest_notes()
        .filter_map(|(rec, note)| match note {
            Note::BlockCommitted { block, .. } => Some(rec.time - proposed[block]),
            _ => None,
        })
        .collect()
}

fn exact_block_latency(trace: &Trace, want: Tick, blocks: usize) -> Result<(), String> {
    let lat = commit_latencies(trace);
    let expected = blocks * trace.honest_ids().count();
    if lat.len() != expected {
        return Err(format!("{} commits, want {expected}", lat.len()));
    }
    match lat.iter().find(|l| **l != want) {
        Some(l) => Err(format!("a block committed {l} ticks after its proposal, want {want}")),
        None => Ok(()),
    }
}

/// In view 0 each honest replica has committed at least `p` blocks by local
/// `base + (p - 1) * alpha` for every `p` up to `blocks`.
fn view_zero_progress(trace: &Trace, base: Tick, alpha: Tick, blocks: usize) -> Result<(), String> {
    for r in trace.honest_ids() {
        let mut local: Vec<Tick> = trace
            .notes()
            .filter(|(rec, note)| rec.replica == r && matches!(note, Note::BlockCommitted { view: 0, .. }))
            .map(|(rec, _)| rec.local)
            .collect();
        local.sort_unstable();
        for p in 1..=blocks {
            let deadline = base + (p as Tick - 1) * alpha;
            match local.get(p - 1) {
                Some(&t) if t <= deadline => {}
                other => return Err(format!("replica {r:?}: commit #{p} at {other:?}, deadline {deadline}")),
            }
        }
    }
    Ok(())
}

fn no_honest_blame(trace: &Trace) -> Result<(), String> {
    match trace.honest_notes().find(|(_, note)| matches!(note, Note::Blamed { .. })) {
        Some((rec, note)) => Err(format!("replica {:?} issued {note:?} at {}", rec.replica, rec.time)),
        None => Ok(()),
    }
}

fn view_change(trace: &Trace, big_delta: Tick) -> Result<(), String> {
    let cert_sent = trace.records.iter().any(|rec| {
        trace.is_honest(rec.replica) && matches!(&rec.event, TraceEvent::Send { msg, .. } if msg == "blame-cert")
    });
    if !cert_sent {
        return Err("no honest replica sent a blame certificate".into());
    }
    let first = |r: ReplicaId, pick: &dyn Fn(&Note) -> bool| {
        trace.notes().find(|(rec, note)| rec.replica == r && pick(note)).map(|(rec, _)| (rec.time, rec.local))
    };
    for r in trace.honest_ids() {
        let quorum = first(r, &|n| matches!(n, Note::BlameQuorum { view: 0 }));
        let entered = first(r, &|n| matches!(n, Note::EnteredView { view: 1 }));
        let (Some((q, _)), Some((e, _))) = (quorum, entered) else {
            return Err(format!("replica {r:?}: blame quorum {quorum:?}, entered view 1 {entered:?}"));
        };
        if e != q + 2 * big_delta {
            return Err(format!("replica {r:?}: blame quorum at {q}, entered view 1 at {e}"));
        }
    }
    let leader = ReplicaId(1);
    let entered = first(leader, &|n| matches!(n, Note::EnteredView { view: 1 })).map(|x| x.1);
    let committed = first(leader, &|n| matches!(n, Note::BlockCommitted { view: 1, .. })).map(|x| x.1);
    match (entered, committed) {
        (Some(e), Some(c)) if c - e <= 6 * big_delta => Ok(()),
        other => Err(format!("view-1 leader entered/committed at {other:?}")),
    }
}

fn report(index: usize, ok: bool, detail: &str) -> bool {
    println!("criterion {index}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    let replays = Replays::default();
    let mut results = Vec::new();
    let none: Inspect<'_> = &|_, _| Ok(());

    let c01 = load("c01_ba_good_case.toml");
    let s = sweep(&c01, &replays, &|t, _| every_honest_decides_at(t, 12, Some(CommitPath::Quorum)));
    results.push(report(1, s.failures.is_empty(), &format!("1d-ba commits at 12 on the fast path; {}", s.detail())));

    let c02 = load("c02_bb_good_case.toml");
    let s = sweep(&c02, &replays, &|t, _| every_honest_decides_at(t, 12, None));
    results.push(report(2, s.failures.is_empty(), &format!("1d-bb commits at 12; {}", s.detail())));

    let c03 = load("c03_smr_good_case.toml");
    let blocks = c03.params.blocks as usize;
    let s = sweep(&c03, &replays, &|t, _| exact_block_latency(t, 12, blocks));
    results.push(report(3, s.failures.is_empty(), &format!("every block commits 12 after its proposal; {}", s.detail())));

    let progress = |s: &Scenario| {
        let (big_delta, alpha, blocks) = (s.sim.big_delta, s.params.alpha, s.params.blocks as usize);
        move |t: &Trace, _: &RunReport| {
            view_zero_progress(t, 6 * big_delta, alpha, blocks)?;
            no_honest_blame(t)
        }
    };
    let c04 = load("c04_smr_liveness.toml");
    let good = sweep(&c03, &replays, &progress(&c03));
    let fuzz = sweep(&c04, &replays, &progress(&c04));
    let ok = good.failures.is_empty() && fuzz.failures.is_empty();
    results.push(report(4, ok, &format!("progress and no honest blame: good case {}; liveness {}", good.detail(), fuzz.detail())));

    let mut lines = Vec::new();
    let mut ok = true;
    for file in ["c05_fuzz_ba.toml", "c05_fuzz_bb.toml", "c05_fuzz_smr.toml"] {
        let sc = load(file);
        let s = sweep(&sc, &replays, none);
        ok &= s.failures.is_empty() && s.runs == 1000;
        lines.push(format!("{} {}", sc.name, s.detail()));
    }
    results.push(report(5, ok, &lines.join("; ")));

    let c06 = load("c06_view_change.toml");
    let big_delta = c06.sim.big_delta;
    let s = sweep(&c06, &replays, &|t, _| view_change(t, big_delta));
    results.push(report(6, s.failures.is_empty(), &format!("blame certificate and view-1 timing; {}", s.detail())));

    let latency = std::sync::Mutex::new(Vec::new());
    let record = |t: &Trace, r: &RunReport| {
        latency.lock().unwrap().push(r.latency);
        every_honest_decides_at(t, r.latency.unwrap_or(0), None)
    };
    let quiet = sweep(&load("c07_mlf_good_case.toml"), &replays, &record);
    let worst = sweep(&load("c07_mlf_worst_cycle.toml"), &replays, &record);
    let lat = latency.into_inner().unwrap();
    let max = lat.iter().flatten().max().copied();
    let mlf_fuzz = sweep(&load("c07_mlf_fuzz.toml"), &replays, none);
    let mixed = sweep(&load("c07_lb_mlf_3.toml"), &replays, none);
    let unanimous = lower_bound("1d-ba+mlf", 5, 2, "mobile-link", "lb-mlf-1");
    let unanimous = sweep(&unanimous, &replays, &|t, _| match decisions(t).iter().find(|d| d.1 != Value::from_u64(0)) {
        Some(d) => Err(format!("replica {:?} decided {:?}", d.0, d.1)),
        None => Ok(()),
    });
    let ok = [&quiet, &worst, &mlf_fuzz, &mixed, &unanimous].iter().all(|s| s.failures.is_empty())
        && lat == vec![Some(22), Some(24)]
        && max == Some(24)
        && mlf_fuzz.runs == 500;
    results.push(report(
        7,
        ok,
        &format!(
            "max good-case latency {max:?} (no faults {:?}, directed cycle {:?}); relay fuzz {}; mixed construction {}",
            lat.first().copied().flatten(),
            lat.get(1).copied().flatten(),
            mlf_fuzz.detail(),
            mixed.detail()
        ),
    ));

    let c08 = load("c08_msf_good_case.toml");
    let blocks = c08.params.blocks as usize;
    let good = sweep(&c08, &replays, &|t, _| exact_block_latency(t, 14, blocks));
    let fuzz = sweep(&load("c08_msf_fuzz.toml"), &replays, none);
    let ok = good.failures.is_empty() && fuzz.failures.is_empty() && fuzz.runs == 500;
    results.push(report(8, ok, &format!("block latency 14: {}; sluggish fuzz {}", good.detail(), fuzz.detail())));

    let explored = fallback_enum::explore();
    let c09 = load("c09_fallback_ba.toml");
    let rounds_end = LockStepBa::rounds(c09.sim.f) as Tick * 2 * c09.sim.big_delta;
    let timed = sweep(&c09, &replays, &|t, _| every_honest_decides_at(t, rounds_end, None));
    let ok = explored.failures.is_empty()
        && explored.max_rounds == LockStepBa::rounds(ENUM_F)
        && explored.executions == 3 * 9 * 25 * 25
        && timed.failures.is_empty();
    results.push(report(
        9,
        ok,
        &format!(
            "{} exhaustive executions, {} failures, {} rounds; timed runs decide at {rounds_end}: {}",
            explored.executions,
            explored.failures.len(),
            explored.max_rounds,
            timed.detail()
        ),
    ));

    let (tampered_ok, tamper_detail) = tamper_is_detected(&c01);
    let runs = replays.runs.load(Ordering::Relaxed);
    let identical = replays.identical.load(Ordering::Relaxed);
    results.push(report(
        10,
        runs > 0 && runs == identical && tampered_ok,
        &format!("{identical} of {runs} exported traces replayed byte for byte; {tamper_detail}"),
    ));

    if results.iter().all(|ok| *ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// A trace whose header no longer matches its events must be reported as
/// diverging.
fn tamper_is_detected(s: &Scenario) -> (bool, String) {
    let (trace, _) = run_seed(s, s.seed, &[]).expect("runs");
    let text = trace_to_string(s, s.seed, &trace);
    let (header, events) = text.split_once('\n').expect("header line");
    let mut header: serde_json::Value = serde_json::from_str(header).expect("header json");
    header["scenario"]["sim"]["Delta"] = serde_json::json!(s.sim.big_delta + 1);
    let edited = format!("{header}\n{events}");
    match replay(Cursor::new(edited)) {
        Ok(Some(d)) => (true, format!("edited header diverges at event {}", d.index)),
        other => (false, format!("edited header not detected: {other:?}")),
    }
}
