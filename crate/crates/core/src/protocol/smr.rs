//! Leader-based state machine replication with a one-Δ steady state and a
//! blame-driven view change. The same engine runs the sluggish-tolerant
//! variant; its extra quorum stages live in `smr_msf`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::Timing;
use crate::chain::{
    blame_digest, proposal_digest, proposals_equivocate, status_digest, vote_digest, BlameCert, BlameKind, BlameVote, Block,
    BlockId, BlockProposal, BlockStore, BlockVote, StatusMsg, VoteCert, VoteKind,
};
use crate::sim::{Context, Node, Note, Tick, TimerId, TimerTag};
use crate::types::{Digest, ReplicaId, Signature};
use crate::wire::WireMessage;

/// Held proposals kept per view while their chain is incomplete.
const HELD_CAP: usize = 64;
/// Messages buffered for views not yet entered.
const FUTURE_CAP: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmrVariant {
    Standard,
    Sluggish,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmrParams {
    /// Interval between consecutive leader proposals.
    pub alpha: Tick,
    /// Chain length after which a replica considers its job finished.
    pub blocks: u64,
    /// Optional view bound after which a replica also counts as finished.
    pub views_to_run: Option<u64>,
}

pub fn leader_of(view: u64, n: usize) -> ReplicaId {
    ReplicaId((view % n as u64) as usize)
}

/// Synthetic client payload, unique per view and height.
pub fn batch_for(view: u64, height: u64) -> Vec<u8> {
    let mut out = view.to_be_bytes().to_vec();
    out.extend_from_slice(&height.to_be_bytes());
    out
}

type TallyKey = (VoteKind, u64, BlockId, u64);

pub(super) struct ViewState {
    pub(super) entered: Tick,
    proposals: Vec<BlockProposal>,
    seen: BTreeSet<Digest>,
    held: VecDeque<BlockProposal>,
    acted: BTreeSet<BlockId>,
    unresolved: Vec<(usize, usize)>,
    pub(super) equivocation: bool,
    evidence_sent: bool,
    pub(super) stopped: bool,
    pub(super) committed: u64,
    pub(super) vote_timers: BTreeMap<TimerId, (BlockId, u64)>,
    ready: bool,
    last_proposed: Option<Block>,
}

impl ViewState {
    fn new(entered: Tick) -> Self {
        ViewState {
            entered,
            proposals: Vec::new(),
            seen: BTreeSet::new(),
            held: VecDeque::new(),
            acted: BTreeSet::new(),
            unresolved: Vec::new(),
            equivocation: false,
            evidence_sent: false,
            stopped: false,
            committed: 0,
            vote_timers: BTreeMap::new(),
            ready: false,
            last_proposed: None,
        }
    }
}

pub struct SmrNode {
    pub(super) me: ReplicaId,
    pub(super) n: usize,
    pub(super) f: usize,
    pub(super) variant: SmrVariant,
    pub(super) timing: Timing,
    pub(super) params: SmrParams,
    store: BlockStore,
    forwarded: BTreeSet<BlockId>,
    highest: VoteCert,
    committed: Vec<BlockId>,
    pub(super) view: u64,
    pub(super) vs: ViewState,
    tallies: BTreeMap<TallyKey, BTreeMap<ReplicaId, Signature>>,
    quorums: BTreeSet<TallyKey>,
    blames: BTreeMap<(BlameKind, u64), BTreeMap<ReplicaId, Signature>>,
    pub(super) blame_certs: BTreeSet<(BlameKind, u64)>,
    sent_blames: BTreeSet<(BlameKind, u64)>,
    entry_target: u64,
    statuses: BTreeMap<u64, BTreeMap<ReplicaId, StatusMsg>>,
    future: BTreeMap<u64, Vec<(ReplicaId, WireMessage)>>,
    future_len: usize,
    pending_commits: Vec<(BlockId, u64)>,
    done_noted: bool,
}

impl SmrNode {
    pub fn new(me: ReplicaId, n: usize, f: usize, variant: SmrVariant, timing: Timing, params: SmrParams) -> Self {
        let kind = match variant {
            SmrVariant::Standard => VoteKind::Vote,
            SmrVariant::Sluggish => VoteKind::Vote1,
        };
        SmrNode {
            me,
            n,
            f,
            variant,
            timing,
            params,
            store: BlockStore::new(),
            forwarded: BTreeSet::new(),
            highest: VoteCert::genesis(kind),
            committed: Vec::new(),
            view: 0,
            vs: ViewState::new(0),
            tallies: BTreeMap::new(),
            quorums: BTreeSet::new(),
            blames: BTreeMap::new(),
            blame_certs: BTreeSet::new(),
            sent_blames: BTreeSet::new(),
            entry_target: 0,
            statuses: BTreeMap::new(),
            future: BTreeMap::new(),
            future_len: 0,
            pending_commits: Vec::new(),
            done_noted: false,
        }
    }

    pub fn committed_chain(&self) -> &[BlockId] {
        &self.committed
    }

    pub fn current_view(&self) -> u64 {
        self.view
    }

    pub fn highest_cert(&self) -> &VoteCert {
        &self.highest
    }

    /// Kind of the certificate that ranks blocks.
    pub(super) fn cert_kind(&self) -> VoteKind {
        self.highest.kind
    }

    /// Blame certificate that suppresses voting.
    pub(super) fn suppressing_blame(&self) -> BlameKind {
        match self.variant {
            SmrVariant::Standard => BlameKind::Blame,
            SmrVariant::Sluggish => BlameKind::Blame1,
        }
    }

    fn progress_base(&self) -> Tick {
        match self.variant {
            SmrVariant::Standard => 6 * self.timing.big_delta,
            SmrVariant::Sluggish => 8 * self.timing.big_delta,
        }
    }

    pub(super) fn may_commit(&self) -> bool {
        !self.vs.equivocation && !self.blame_certs.contains(&(self.suppressing_blame(), self.view))
    }

    pub(super) fn may_vote(&self) -> bool {
        self.may_commit() && !self.vs.stopped
    }

    fn is_leader(&self) -> bool {
        leader_of(self.view, self.n) == self.me
    }

    // ---- views -------------------------------------------------------

    fn enter_view(&mut self, ctx: &mut Context<'_>, view: u64) {
        for id in std::mem::take(&mut self.vs.vote_timers).into_keys() {
            ctx.abort_timer(id);
        }
        self.view = view;
        self.vs = ViewState::new(ctx.now());
        ctx.note(Note::EnteredView { view });
        let leader = leader_of(view, self.n);
        if view > 0 {
            let sig = ctx.sign(status_digest(&self.highest, view - 1));
            ctx.send(leader, WireMessage::Status(StatusMsg { cert: self.highest.clone(), view: view - 1, sig }));
        }
        ctx.set_timer(self.progress_base(), TimerTag::Progress { view, p: 1 });
        if leader == self.me {
            if view == 0 {
                let genesis = Block::genesis();
                self.propose(ctx, &genesis, None);
            } else {
                ctx.set_timer(2 * self.timing.big_delta, TimerTag::LeaderReady { view });
            }
        }
        let replay: Vec<u64> = self.future.range(..=view).map(|(v, _)| *v).collect();
        for v in replay {
            let msgs = self.future.remove(&v).unwrap_or_default();
            self.future_len -= msgs.len();
            if v == view {
                for (from, msg) in msgs {
                    self.on_message(ctx, from, msg);
                }
            }
        }
    }

    fn buffer(&mut self, view: u64, from: ReplicaId, msg: WireMessage) {
        if self.future_len < FUTURE_CAP {
            self.future.entry(view).or_default().push((from, msg));
            self.future_len += 1;
        }
    }

    /// Reacts to the quorum that ends view `view`.
    pub(super) fn begin_view_change(&mut self, ctx: &mut Context<'_>, view: u64) {
        ctx.note(Note::BlameQuorum { view });
        if view >= self.view {
            self.vs.stopped = true;
            for id in std::mem::take(&mut self.vs.vote_timers).into_keys() {
                ctx.abort_timer(id);
            }
        }
        if view + 1 > self.entry_target {
            self.entry_target = view + 1;
            ctx.set_timer(2 * self.timing.big_delta, TimerTag::EnterView { view: view + 1 });
        }
    }

    // ---- leader ------------------------------------------------------

    fn propose(&mut self, ctx: &mut Context<'_>, parent: &Block, status: Option<Vec<StatusMsg>>) {
        let height = parent.height + 1;
        let block = Block { height, batch: batch_for(self.view, height), parent: parent.id() };
        self.propose_block(ctx, block, status);
    }

    fn propose_block(&mut self, ctx: &mut Context<'_>, block: Block, status: Option<Vec<StatusMsg>>) {
        let view = self.view;
        let sig = ctx.sign(proposal_digest(block.id(), &status, view));
        ctx.note(Note::Proposed { view, height: block.height, block: block.id() });
        let more = block.height < self.params.blocks;
        self.vs.last_proposed = Some(block.clone());
        ctx.broadcast(WireMessage::Propose(BlockProposal { block, status, view, sig }));
        if more {
            ctx.set_timer(self.timing.alpha, TimerTag::Propose { view });
        }
    }

    fn on_propose_timer(&mut self, ctx: &mut Context<'_>, view: u64) {
        if view != self.view || self.vs.stopped || !self.is_leader() {
            return;
        }
        if let Some(last) = self.vs.last_proposed.clone() {
            if last.height < self.params.blocks {
                self.propose(ctx, &last, None);
            }
        }
    }

    fn try_first_proposal(&mut self, ctx: &mut Context<'_>) {
        if !self.is_leader() || !self.vs.ready || self.vs.last_proposed.is_some() || self.vs.stopped {
            return;
        }
        let Some(received) = self.statuses.get(&(self.view - 1)) else { return };
        if received.len() < self.f + 1 {
            return;
        }
        let mut chosen: Vec<StatusMsg> = received.values().cloned().collect();
        chosen.sort_by(|a, b| b.cert.rank().cmp(&a.cert.rank()).then(a.sig.signer.cmp(&b.sig.signer)));
        chosen.truncate(self.f + 1);
        let top = chosen[0].cert.clone();
        let height = top.height + 1;
        let block = Block { height, batch: batch_for(self.view, height), parent: top.block };
        self.propose_block(ctx, block, Some(chosen));
    }

    fn on_status(&mut self, ctx: &mut Context<'_>, s: StatusMsg) {
        if s.view + 1 < self.view || !s.verify(ctx.auth(), self.n, self.f) {
            return;
        }
        self.statuses.entry(s.view).or_default().entry(s.sig.signer).or_insert(s);
        self.try_first_proposal(ctx);
    }

    // ---- proposals ---------------------------------------------------

    fn on_propose(&mut self, ctx: &mut Context<'_>, from: ReplicaId, p: BlockProposal) {
        if p.view > self.view {
            self.buffer(p.view, from, WireMessage::Propose(p));
            return;
        }
        if p.view < self.view || !p.verify_from(ctx.auth(), leader_of(self.view, self.n)) {
            return;
        }
        if !self.vs.seen.insert(p.digest()) {
            return;
        }
        if p.sig.signer != self.me {
            ctx.send_to_others(WireMessage::Propose(p.clone()));
        }
        self.learn_block(ctx, p.block.clone());
        let idx = self.vs.proposals.len();
        self.vs.proposals.push(p.clone());
        for j in 0..idx {
            self.compare_proposals(ctx, j, idx);
        }
        if self.vs.held.len() >= HELD_CAP {
            self.vs.held.pop_front();
        }
        self.vs.held.push_back(p);
        self.evaluate_held(ctx);
    }

    fn compare_proposals(&mut self, ctx: &mut Context<'_>, i: usize, j: usize) {
        let (a, b) = (&self.vs.proposals[i], &self.vs.proposals[j]);
        let verdict =
            if proposals_equivocate(a, b) { Some(true) } else { self.store.equivocate(a.block.id(), b.block.id()) };
        match verdict {
            Some(true) => self.on_equivocation(ctx, i, j),
            Some(false) => {}
            None => self.vs.unresolved.push((i, j)),
        }
    }

    fn on_equivocation(&mut self, ctx: &mut Context<'_>, i: usize, j: usize) {
        if !self.vs.equivocation {
            self.vs.equivocation = true;
            ctx.note(Note::Equivocation { view: self.view });
        }
        self.blame(ctx, true);
        if !self.vs.evidence_sent {
            self.vs.evidence_sent = true;
            ctx.send_to_others(WireMessage::Propose(self.vs.proposals[i].clone()));
            ctx.send_to_others(WireMessage::Propose(self.vs.proposals[j].clone()));
        }
    }

    fn recheck_unresolved(&mut self, ctx: &mut Context<'_>) {
        for (i, j) in std::mem::take(&mut self.vs.unresolved) {
            self.compare_proposals(ctx, i, j);
        }
    }

    /// Whether the forward conditions hold for `p`.
    fn ready(&self, ctx: &Context<'_>, p: &BlockProposal) -> bool {
        let id = p.block.id();
        if !self.store.chain_known(id) {
            return false;
        }
        let anchor = match &p.status {
            None => self.highest.clone(),
            Some(set) => {
                let mut signers = BTreeSet::new();
                let valid: Vec<&StatusMsg> = set
                    .iter()
                    .filter(|s| s.view + 1 == p.view && s.verify(ctx.auth(), self.n, self.f) && signers.insert(s.sig.signer))
                    .collect();
                if valid.len() < self.f + 1 {
                    return false;
                }
                valid.into_iter().map(|s| s.cert.clone()).max_by_key(|c| c.rank()).expect("non-empty")
            }
        };
        self.store.extends_at(id, anchor.block, anchor.height) == Some(true)
    }

    fn evaluate_held(&mut self, ctx: &mut Context<'_>) {
        let held = std::mem::take(&mut self.vs.held);
        let mut keep = VecDeque::new();
        for p in held {
            if !self.ready(ctx, &p) {
                keep.push_back(p);
                continue;
            }
            let id = p.block.id();
            if self.vs.stopped || !self.vs.acted.insert(id) {
                continue;
            }
            let chain = self.store.chain(id).unwrap_or_default();
            for ancestor in chain.iter().take(chain.len().saturating_sub(1)) {
                if self.forwarded.insert(*ancestor) {
                    let block = self.store.get(ancestor).expect("known chain").clone();
                    ctx.send_to_others(WireMessage::Block(block));
                }
            }
            match self.variant {
                SmrVariant::Standard => self.start_vote_timer(ctx, id, p.block.height),
                SmrVariant::Sluggish => self.send_vote(ctx, VoteKind::Ack, id, p.block.height),
            }
        }
        self.vs.held = keep;
    }

    pub(super) fn start_vote_timer(&mut self, ctx: &mut Context<'_>, block: BlockId, height: u64) {
        let id = ctx.set_timer(self.timing.big_delta, TimerTag::Vote { key: height });
        self.vs.vote_timers.insert(id, (block, height));
    }

    fn on_vote_timer(&mut self, ctx: &mut Context<'_>, id: TimerId) {
        let Some((block, height)) = self.vs.vote_timers.remove(&id) else { return };
        if self.may_vote() {
            self.send_vote(ctx, self.cert_kind(), block, height);
        }
    }

    pub(super) fn send_vote(&mut self, ctx: &mut Context<'_>, kind: VoteKind, block: BlockId, height: u64) {
        let sig = ctx.sign(vote_digest(kind, block, height, self.view));
        ctx.broadcast(WireMessage::Vote(BlockVote { kind, block, height, view: self.view, sig }));
    }

    // ---- blocks and commits -----------------------------------------

    fn learn_block(&mut self, ctx: &mut Context<'_>, block: Block) {
        if let Some(parent) = self.store.get(&block.parent) {
            if parent.height + 1 != block.height {
                return;
            }
        }
        let (id, height, parent) = (block.id(), block.height, block.parent);
        if !self.store.insert(block) {
            return;
        }
        ctx.note(Note::BlockLearned { block: id, height, parent });
        self.recheck_unresolved(ctx);
        self.evaluate_held(ctx);
        for (block, view) in std::mem::take(&mut self.pending_commits) {
            self.commit(ctx, block, view);
        }
    }

    pub(super) fn commit(&mut self, ctx: &mut Context<'_>, block: BlockId, view: u64) {
        let Some(chain) = self.store.chain(block).filter(|_| self.store.chain_known(block)) else {
            self.pending_commits.push((block, view));
            return;
        };
        for (i, id) in chain.into_iter().enumerate() {
            let height = i as u64 + 1;
            match self.committed.get(i) {
                Some(kept) if *kept != id => ctx.note(Note::CommitConflict { height, kept: *kept, other: id }),
                Some(_) => {}
                None => {
                    self.committed.push(id);
                    if view == self.view {
                        self.vs.committed += 1;
                    }
                    ctx.note(Note::BlockCommitted { height, block: id, view, direct: id == block });
                }
            }
        }
        if self.is_done() && !self.done_noted {
            self.done_noted = true;
            ctx.note(Note::Done);
        }
    }

    // ---- votes and certificates -------------------------------------

    fn on_vote(&mut self, ctx: &mut Context<'_>, from: ReplicaId, v: BlockVote) {
        if v.view > self.view {
            self.buffer(v.view, from, WireMessage::Vote(v));
            return;
        }
        if v.view < self.view || !v.verify(ctx.auth(), self.n) {
            return;
        }
        let key = (v.kind, v.view, v.block, v.height);
        let tally = self.tallies.entry(key).or_default();
        tally.insert(v.sig.signer, v.sig);
        if tally.len() < self.f + 1 || !self.quorums.insert(key) {
            return;
        }
        let votes: Vec<Signature> = tally.values().copied().take(self.f + 1).collect();
        let cert = VoteCert { kind: v.kind, view: v.view as i64, block: v.block, height: v.height, votes };
        match self.variant {
            SmrVariant::Standard => self.on_vote_quorum(ctx, cert),
            SmrVariant::Sluggish => self.msf_on_quorum(ctx, cert),
        }
    }

    fn on_vote_quorum(&mut self, ctx: &mut Context<'_>, cert: VoteCert) {
        self.observe_cert(ctx, &cert);
        if self.may_commit() {
            let (block, view) = (cert.block, cert.view as u64);
            ctx.send_to_others(WireMessage::Cert(cert));
            self.commit(ctx, block, view);
        }
    }

    /// Records a ranking certificate formed from a quorum.
    pub(super) fn observe_cert(&mut self, ctx: &mut Context<'_>, cert: &VoteCert) {
        ctx.note(Note::CertObserved { view: cert.view, height: cert.height, block: cert.block });
        if cert.rank() > self.highest.rank() {
            self.highest = cert.clone();
        }
    }

    fn on_cert(&mut self, ctx: &mut Context<'_>, from: ReplicaId, c: VoteCert) {
        if c.is_genesis() {
            return;
        }
        let view = c.view as u64;
        if view > self.view {
            self.buffer(view, from, WireMessage::Cert(c));
            return;
        }
        if view < self.view || !c.verify(ctx.auth(), self.n, self.f) {
            return;
        }
        for sig in c.votes.iter().copied() {
            let vote = BlockVote { kind: c.kind, block: c.block, height: c.height, view, sig };
            self.on_vote(ctx, from, vote);
        }
    }

    // ---- blame -------------------------------------------------------

    pub(super) fn blame(&mut self, ctx: &mut Context<'_>, equivocation: bool) {
        let kind = self.suppressing_blame();
        self.send_blame(ctx, kind, self.view, equivocation);
    }

    pub(super) fn send_blame(&mut self, ctx: &mut Context<'_>, kind: BlameKind, view: u64, equivocation: bool) {
        if !self.sent_blames.insert((kind, view)) {
            return;
        }
        let sig = ctx.sign(blame_digest(kind, view));
        if kind == self.suppressing_blame() {
            ctx.note(Note::Blamed { view, equivocation });
        }
        ctx.broadcast(WireMessage::Blame(BlameVote { kind, view, sig }));
    }

    fn on_blame(&mut self, ctx: &mut Context<'_>, b: BlameVote) {
        if b.view < self.view || !b.verify(ctx.auth(), self.n) {
            return;
        }
        let tally = self.blames.entry((b.kind, b.view)).or_default();
        tally.insert(b.sig.signer, b.sig);
        if tally.len() == self.f + 1 {
            let blames = tally.values().copied().collect();
            self.on_blame_quorum(ctx, BlameCert { kind: b.kind, view: b.view, blames });
        }
    }

    fn on_blame_cert(&mut self, ctx: &mut Context<'_>, c: BlameCert) {
        if c.view < self.view || !c.verify(ctx.auth(), self.n, self.f) {
            return;
        }
        self.on_blame_quorum(ctx, c);
    }

    fn on_blame_quorum(&mut self, ctx: &mut Context<'_>, cert: BlameCert) {
        if !self.blame_certs.insert((cert.kind, cert.view)) {
            return;
        }
        let (kind, view) = (cert.kind, cert.view);
        ctx.send_to_others(WireMessage::BlameCert(cert));
        match (self.variant, kind) {
            (SmrVariant::Standard, BlameKind::Blame) => self.begin_view_change(ctx, view),
            (SmrVariant::Sluggish, _) => self.msf_on_blame_quorum(ctx, kind, view),
            _ => {}
        }
    }

    fn on_progress(&mut self, ctx: &mut Context<'_>, view: u64, p: u64) {
        if view != self.view || self.vs.stopped || self.committed.len() as u64 >= self.params.blocks {
            return;
        }
        if self.vs.committed < p {
            self.blame(ctx, false);
            return;
        }
        let due = self.vs.entered + self.progress_base() + p * self.timing.alpha;
        ctx.set_timer(due.saturating_sub(ctx.now()), TimerTag::Progress { view, p: p + 1 });
    }
}

impl Node for SmrNode {
    fn on_start(&mut self, ctx: &mut Context<'_>) {
        self.enter_view(ctx, 0);
    }

    fn on_message(&mut self, ctx: &mut Context<'_>, from: ReplicaId, msg: WireMessage) {
        match msg {
            WireMessage::Propose(p) => self.on_propose(ctx, from, p),
            WireMessage::Block(b) => self.learn_block(ctx, b),
            WireMessage::Vote(v) => self.on_vote(ctx, from, v),
            WireMessage::Cert(c) => self.on_cert(ctx, from, c),
            WireMessage::Blame(b) => self.on_blame(ctx, b),
            WireMessage::BlameCert(c) => self.on_blame_cert(ctx, c),
            WireMessage::Status(s) => self.on_status(ctx, s),
            _ => {}
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_>, id: TimerId, tag: TimerTag) {
        match tag {
            TimerTag::Vote { .. } => self.on_vote_timer(ctx, id),
            TimerTag::Propose { view } => self.on_propose_timer(ctx, view),
            TimerTag::LeaderReady { view } if view == self.view => {
                self.vs.ready = true;
                self.try_first_proposal(ctx);
            }
            TimerTag::Progress { view, p } => self.on_progress(ctx, view, p),
            TimerTag::EnterView { view } if view > self.view => self.enter_view(ctx, view),
            _ => {}
        }
    }

    fn is_done(&self) -> bool {
        self.committed.len() as u64 >= self.params.blocks || self.params.views_to_run.is_some_and(|v| self.view >= v)
    }
}
