//! Per-trace property checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::BlockId;
use crate::protocol::smr::leader_of;
use crate::protocol::{ProtocolId, Timing};
use crate::sim::budget::check_sluggish;
use crate::sim::{CommitPath, Note, Tick, Trace, TraceEvent};
use crate::types::{Digest, ReplicaId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Agreement,
    Termination,
    Validity,
    /// Fast-path commits are unique and every honest lock matches them.
    Lemma1,
    Safety,
    /// Certificates ranked at or above a direct commit extend it.
    Lemma2,
    /// A certified chain is held by every honest replica entering the next view.
    Lemma4,
    /// Relayed broadcasts reach every honest replica within two hops.
    Lemma5,
    /// A certified chain is held by f+1 honest replicas entering the next view.
    Lemma6,
    /// Same as `Lemma2`, for the sluggish-tolerant replication protocol.
    Lemma7,
    Liveness,
    /// Enough honest replicas stay prompt throughout.
    Sluggish,
}

impl Check {
    pub const ALL: [Check; 12] = [
        Check::Agreement,
        Check::Termination,
        Check::Validity,
        Check::Lemma1,
        Check::Safety,
        Check::Lemma2,
        Check::Lemma4,
        Check::Lemma5,
        Check::Lemma6,
        Check::Lemma7,
        Check::Liveness,
        Check::Sluggish,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Agreement => "agreement",
            Check::Termination => "termination",
            Check::Validity => "validity",
            Check::Lemma1 => "lemma1",
            Check::Safety => "safety",
            Check::Lemma2 => "lemma2",
            Check::Lemma4 => "lemma4",
            Check::Lemma5 => "lemma5",
            Check::Lemma6 => "lemma6",
            Check::Lemma7 => "lemma7",
            Check::Liveness => "liveness",
            Check::Sluggish => "sluggish",
        }
    }

    pub fn applies_to(self, protocol: ProtocolId) -> bool {
        use ProtocolId::*;
        match self {
            Check::Agreement | Check::Termination | Check::Validity | Check::Safety => true,
            Check::Lemma1 => matches!(protocol, Ba | Bb | BaMlf | BbMlf),
            Check::Lemma2 | Check::Lemma4 => matches!(protocol, Smr | SmrMlf),
            Check::Lemma5 => protocol.uses_relay(),
            Check::Lemma6 | Check::Lemma7 | Check::Sluggish => protocol == SmrMsf,
            Check::Liveness => protocol.is_replication(),
        }
    }

    /// Every check that applies to `protocol` and holds regardless of the
    /// adversary, so excluding liveness.
    pub fn safety_suite(protocol: ProtocolId) -> Vec<Check> {
        Check::ALL.into_iter().filter(|c| *c != Check::Liveness && c.applies_to(protocol)).collect()
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Check::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown check `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: Check,
    pub message: String,
}

/// Protocol facts a checker needs beyond the trace.
#[derive(Clone, Copy, Debug)]
pub struct CheckContext {
    pub protocol: ProtocolId,
    /// Timing the honest replicas actually use.
    pub timing: Timing,
    pub blocks: u64,
    pub sender: ReplicaId,
}

pub fn run_checks(ctx: &CheckContext, trace: &Trace, checks: &[Check]) -> Vec<Violation> {
    let view = TraceView::new(trace);
    checks.iter().flat_map(|&c| run_check(ctx, &view, c).into_iter().map(move |message| Violation { check: c, message })).collect()
}

fn run_check(ctx: &CheckContext, v: &TraceView<'_>, check: Check) -> Vec<String> {
    if !check.applies_to(ctx.protocol) {
        return Vec::new();
    }
    match check {
        Check::Agreement | Check::Safety if ctx.protocol.is_replication() => v.chain_safety(),
        Check::Agreement | Check::Safety => v.agreement(),
        Check::Termination => v.termination(ctx),
        Check::Validity => v.validity(ctx),
        Check::Lemma1 => v.lemma1(),
        Check::Lemma2 | Check::Lemma7 => v.certs_extend_direct_commits(),
        Check::Lemma4 => v.chain_held_on_view_entry(false),
        Check::Lemma6 => v.chain_held_on_view_entry(true),
        Check::Lemma5 => v.relay_bound(),
        Check::Liveness => v.liveness(ctx),
        Check::Sluggish => v.sluggish(),
    }
}

/// Indexes over one trace shared by the checkers.
struct TraceView<'a> {
    trace: &'a Trace,
    /// Parent and height of every block any honest replica learned.
    blocks: BTreeMap<BlockId, (BlockId, u64)>,
}

impl<'a> TraceView<'a> {
    fn new(trace: &'a Trace) -> Self {
        let mut blocks = BTreeMap::new();
        for (_, note) in trace.honest_notes() {
            if let Note::BlockLearned { block, height, parent } = note {
                blocks.insert(*block, (*parent, *height));
            }
        }
        TraceView { trace, blocks }
    }

    fn honest_count(&self) -> usize {
        self.trace.honest_ids().count()
    }

    fn notes_of(&self, r: ReplicaId) -> impl Iterator<Item = (usize, Tick, &'a Note)> + '_ {
        self.trace.records.iter().enumerate().filter(move |(_, rec)| rec.replica == r).filter_map(|(i, rec)| match &rec.event {
            TraceEvent::Note(n) => Some((i, rec.time, n)),
            _ => None,
        })
    }

    fn decisions(&self) -> BTreeMap<ReplicaId, Vec<(&'a Value, CommitPath)>> {
        let mut out: BTreeMap<ReplicaId, Vec<(&Value, CommitPath)>> = BTreeMap::new();
        for (rec, note) in self.trace.honest_notes() {
            if let Note::Decided { value, path } = note {
                out.entry(rec.replica).or_default().push((value, *path));
            }
        }
        out
    }

    fn agreement(&self) -> Vec<String> {
        let mut out = Vec::new();
        let decisions = self.decisions();
        for (r, ds) in &decisions {
            if ds.len() > 1 {
                out.push(format!("replica {r} decided {} times", ds.len()));
            }
        }
        let values: BTreeSet<&Value> = decisions.values().filter_map(|d| d.first().map(|(v, _)| *v)).collect();
        if values.len() > 1 {
            out.push(format!("honest replicas decided {values:?}"));
        }
        out
    }

    fn chain_safety(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut at_height: BTreeMap<u64, BTreeMap<BlockId, BTreeSet<ReplicaId>>> = BTreeMap::new();
        for (rec, note) in self.trace.honest_notes() {
            match note {
                Note::BlockCommitted { height, block, .. } => {
                    at_height.entry(*height).or_default().entry(*block).or_default().insert(rec.replica);
                }
                Note::CommitConflict { height, kept, other } => {
                    out.push(format!("replica {} saw {other:?} conflict with committed {kept:?} at height {height}", rec.replica))
                }
                _ => {}
            }
        }
        for (h, blocks) in at_height {
            if blocks.len() > 1 {
                out.push(format!("height {h} committed as {:?}", blocks.keys().collect::<Vec<_>>()));
            }
        }
        out
    }

    fn termination(&self, ctx: &CheckContext) -> Vec<String> {
        if ctx.protocol.is_replication() {
            return if self.trace.non_terminating { vec![format!("run stopped at {} before completing", self.trace.end_time)] } else { Vec::new() };
        }
        let decided = self.decisions();
        self.trace.honest_ids().filter(|r| !decided.contains_key(r)).map(|r| format!("replica {r} never decided")).collect()
    }

    fn validity(&self, ctx: &CheckContext) -> Vec<String> {
        let mut inputs: BTreeMap<ReplicaId, &Value> = BTreeMap::new();
        for (rec, note) in self.trace.honest_notes() {
            match note {
                Note::Input { value } => {
                    inputs.insert(rec.replica, value);
                }
                Note::FallbackStarted { lock } if ctx.protocol == ProtocolId::FallbackBa => {
                    inputs.insert(rec.replica, lock);
                }
                _ => {}
            }
        }
        let expected: Option<&Value> = match ctx.protocol {
            ProtocolId::Bb | ProtocolId::BbMlf => {
                if self.trace.is_honest(ctx.sender) {
                    inputs.get(&ctx.sender).copied()
                } else {
                    None
                }
            }
            p if p.is_replication() => None,
            _ => {
                let distinct: BTreeSet<&Value> = inputs.values().copied().collect();
                let all_have = inputs.len() == self.honest_count();
                match distinct.iter().next() {
                    Some(v) if all_have && distinct.len() == 1 && !v.is_bottom() => Some(*v),
                    _ => None,
                }
            }
        };
        let Some(expected) = expected else { return Vec::new() };
        self.decisions()
            .into_iter()
            .filter(|(_, ds)| ds.iter().any(|(v, _)| *v != expected))
            .map(|(r, ds)| format!("replica {r} decided {:?}, every honest input was {expected:?}", ds[0].0))
            .collect()
    }

    fn lemma1(&self) -> Vec<String> {
        let mut out = Vec::new();
        let quorum_commits: BTreeSet<&Value> = self
            .decisions()
            .values()
            .flatten()
            .filter(|(_, p)| *p == CommitPath::Quorum)
            .map(|(v, _)| *v)
            .collect();
        if quorum_commits.len() > 1 {
            out.push(format!("fast-path commits of different values {quorum_commits:?}"));
        }
        if let Some(committed) = quorum_commits.first() {
            for (rec, note) in self.trace.honest_notes() {
                if let Note::FallbackStarted { lock } = note {
                    if lock != *committed {
                        out.push(format!("replica {} entered the fallback locked on {lock:?}, not {committed:?}", rec.replica));
                    }
                }
            }
        }
        out
    }

    /// Whether `block` equals `ancestor` or descends from it. `None` when the
    /// ancestry is not fully known.
    fn extends(&self, block: BlockId, ancestor: BlockId, ancestor_height: u64) -> Option<bool> {
        let mut cur = block;
        loop {
            if cur == ancestor {
                return Some(true);
            }
            let (parent, height) = *self.blocks.get(&cur)?;
            if height <= ancestor_height {
                return Some(false);
            }
            cur = parent;
        }
    }

    /// Proper ancestors of `block` down to, but excluding, genesis.
    fn ancestors(&self, block: BlockId) -> Option<Vec<BlockId>> {
        let mut out = Vec::new();
        let (mut cur, mut height) = *self.blocks.get(&block)?;
        while height > 1 {
            out.push(cur);
            (cur, height) = *self.blocks.get(&cur)?;
        }
        Some(out)
    }

    fn certs_extend_direct_commits(&self) -> Vec<String> {
        let mut direct = BTreeSet::new();
        let mut certs = BTreeSet::new();
        for (_, note) in self.trace.honest_notes() {
            match note {
                Note::BlockCommitted { height, block, view, direct: true } => {
                    direct.insert((*view as i64, *height, *block));
                }
                Note::CertObserved { view, height, block } => {
                    certs.insert((*view, *height, *block));
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        for &(cv, ch, cb) in &direct {
            for &(v, h, b) in certs.range((cv, ch, BlockId(Digest(0)))..) {
                match self.extends(b, cb, ch) {
                    Some(true) => {}
                    Some(false) => out.push(format!("cert ({v},{h},{b:?}) does not extend direct commit ({cv},{ch},{cb:?})")),
                    None => out.push(format!("cert ({v},{h},{b:?}) has unknown ancestry")),
                }
            }
        }
        out
    }

    /// For every certified block, replicas entering the following view must
    /// already hold its ancestors. With `quorum_only`, f+1 honest holders
    /// suffice.
    fn chain_held_on_view_entry(&self, quorum_only: bool) -> Vec<String> {
        let f = self.trace.config.f;
        let certified: BTreeSet<(i64, BlockId)> = self
            .trace
            .honest_notes()
            .filter_map(|(_, n)| match n {
                Note::CertObserved { view, block, .. } if *view >= 0 => Some((*view, *block)),
                _ => None,
            })
            .collect();
        // Per replica: first record index of each learned block, and of each view entry.
        let mut learned: BTreeMap<ReplicaId, BTreeMap<BlockId, usize>> = BTreeMap::new();
        let mut entered: BTreeMap<ReplicaId, BTreeMap<u64, usize>> = BTreeMap::new();
        for r in self.trace.honest_ids() {
            for (i, _, note) in self.notes_of(r) {
                match note {
                    Note::BlockLearned { block, .. } => {
                        learned.entry(r).or_default().entry(*block).or_insert(i);
                    }
                    Note::EnteredView { view } => {
                        entered.entry(r).or_default().entry(*view).or_insert(i);
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        for &(view, block) in &certified {
            let Some(chain) = self.ancestors(block) else {
                out.push(format!("certified block {block:?} has unknown ancestry"));
                continue;
            };
            let next = view as u64 + 1;
            let mut lacking = Vec::new();
            for r in self.trace.honest_ids() {
                let Some(&at) = entered.get(&r).and_then(|e| e.get(&next)) else { continue };
                let held = learned.get(&r);
                if chain.iter().any(|b| held.and_then(|h| h.get(b)).is_none_or(|&i| i > at)) {
                    lacking.push(r);
                }
            }
            let allowed = if quorum_only { self.honest_count().saturating_sub(f + 1) } else { 0 };
            if lacking.len() > allowed {
                out.push(format!("replicas {lacking:?} entered view {next} without the chain of {block:?} certified in view {view}"));
            }
        }
        out
    }

    fn relay_bound(&self) -> Vec<String> {
        let trace = self.trace;
        let n = trace.config.n;
        let delta = trace.config.delta;
        let latest_start = trace.honest_ids().map(|r| trace.offsets[r.0]).max().unwrap_or(0);
        let mut sends: BTreeMap<(Tick, ReplicaId, Digest), BTreeSet<ReplicaId>> = BTreeMap::new();
        let mut first_delivery: BTreeMap<(ReplicaId, ReplicaId, Digest), Tick> = BTreeMap::new();
        for rec in &trace.records {
            if !trace.is_honest(rec.replica) {
                continue;
            }
            match &rec.event {
                TraceEvent::Send { to, envelope: Some(env), .. } if !env.relay && env.origin == rec.replica => {
                    sends.entry((rec.time, rec.replica, env.inner)).or_default().insert(*to);
                }
                TraceEvent::Deliver { envelope: Some(env), .. } => {
                    first_delivery.entry((rec.replica, env.origin, env.inner)).or_insert(rec.time);
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        for ((t, origin, inner), to) in sends {
            if to.iter().filter(|r| **r != origin).count() < n - 1 {
                continue;
            }
            let deadline = t.max(latest_start) + 2 * delta;
            for r in trace.honest_ids().filter(|r| *r != origin) {
                match first_delivery.get(&(r, origin, inner)) {
                    Some(&at) if at <= deadline => {}
                    Some(&at) => out.push(format!("{inner} from {origin} at {t} reached {r} at {at}, after {deadline}")),
                    None if trace.end_time >= deadline => {
                        out.push(format!("{inner} from {origin} at {t} never reached {r} (deadline {deadline})"))
                    }
                    None => {}
                }
            }
        }
        out
    }

    fn liveness(&self, ctx: &CheckContext) -> Vec<String> {
        let trace = self.trace;
        let n = trace.config.n;
        let base = match ctx.protocol {
            ProtocolId::SmrMsf => 8 * ctx.timing.big_delta,
            _ => 6 * ctx.timing.big_delta,
        };
        let mut out = Vec::new();
        for (rec, note) in trace.honest_notes() {
            if let Note::Blamed { view, .. } = note {
                if trace.is_honest(leader_of(*view, n)) {
                    out.push(format!("replica {} blamed honest leader of view {view}", rec.replica));
                }
            }
        }
        for r in trace.honest_ids() {
            let offset = trace.offsets[r.0];
            let mut entries: Vec<(u64, Tick)> = Vec::new();
            let mut commits: Vec<(Tick, u64)> = Vec::new();
            for (_, time, note) in self.notes_of(r) {
                match note {
                    Note::EnteredView { view } => entries.push((*view, time)),
                    Note::BlockCommitted { view, .. } => commits.push((time, *view)),
                    _ => {}
                }
            }
            for (k, &(view, at)) in entries.iter().enumerate() {
                if !trace.is_honest(leader_of(view, n)) {
                    continue;
                }
                let left = entries.get(k + 1).map_or(Tick::MAX, |e| e.1);
                for p in 1..=ctx.blocks {
                    let deadline = (at - offset) + base + (p - 1) * ctx.timing.alpha + offset;
                    if deadline > trace.end_time || deadline >= left {
                        break;
                    }
                    let total = commits.iter().filter(|(t, _)| *t <= deadline).count() as u64;
                    let in_view = commits.iter().filter(|(t, v)| *t <= deadline && *v == view).count() as u64;
                    if total < ctx.blocks && in_view < p {
                        out.push(format!("replica {r} had {in_view} commits in view {view} by {deadline}, needed {p}"));
                        break;
                    }
                }
            }
        }
        out
    }

    fn sluggish(&self) -> Vec<String> {
        let trace = self.trace;
        match check_sluggish(&trace.faults.sluggish, &trace.honest, trace.config.f) {
            Ok(_) => Vec::new(),
            Err(e) => vec![e.to_string()],
        }
    }
}
