//! Sluggish-tolerant replication: every forward, vote and blame step is
//! split into two quorum-gated stages.
//!
//! Steady state per block: ack on a valid proposal, start the vote timer
//! after f+1 acks, send vote1 when it expires, turn f+1 vote1 into the
//! ranking certificate and send vote2, commit on f+1 vote2. View change:
//! blame1, then blame2 after f+1 blame1, then the new view after f+1 blame2.

use super::smr::{SmrNode, SmrParams, SmrVariant};
use super::Timing;
use crate::chain::{BlameKind, VoteCert, VoteKind};
use crate::sim::Context;
use crate::types::ReplicaId;
use crate::wire::WireMessage;

pub fn msf_node(me: ReplicaId, n: usize, f: usize, timing: Timing, params: SmrParams) -> SmrNode {
    SmrNode::new(me, n, f, SmrVariant::Sluggish, timing, params)
}

impl SmrNode {
    pub(super) fn msf_on_quorum(&mut self, ctx: &mut Context<'_>, cert: VoteCert) {
        match cert.kind {
            VoteKind::Ack => {
                if cert.view as u64 == self.view && !self.vs.stopped {
                    self.start_vote_timer(ctx, cert.block, cert.height);
                }
            }
            VoteKind::Vote1 => {
                self.observe_cert(ctx, &cert);
                if self.may_vote() {
                    let (block, height) = (cert.block, cert.height);
                    ctx.send_to_others(WireMessage::Cert(cert));
                    self.send_vote(ctx, VoteKind::Vote2, block, height);
                }
            }
            VoteKind::Vote2 => {
                if self.may_commit() {
                    let (block, view) = (cert.block, cert.view as u64);
                    ctx.send_to_others(WireMessage::Cert(cert));
                    self.commit(ctx, block, view);
                }
            }
            VoteKind::Vote => {}
        }
    }

    pub(super) fn msf_on_blame_quorum(&mut self, ctx: &mut Context<'_>, kind: BlameKind, view: u64) {
        match kind {
            BlameKind::Blame1 => self.send_blame(ctx, BlameKind::Blame2, view, false),
            BlameKind::Blame2 => self.begin_view_change(ctx, view),
            BlameKind::Blame => {}
        }
    }
}
