//! Event log of one run and its newline-delimited JSON form.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::config::{SimConfig, Tick};
use super::network::NetworkFaults;
use super::node::{Note, TimerId, TimerTag};
use crate::types::{Digest, ReplicaId};
use crate::wire::WireMessage;

/// Origin and inner digest of a relay envelope, kept so relay bounds can be
/// checked without decoding payloads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeMeta {
    pub origin: ReplicaId,
    pub relay: bool,
    pub inner: Digest,
}

impl EnvelopeMeta {
    pub fn of(msg: &WireMessage) -> Option<EnvelopeMeta> {
        match msg {
            WireMessage::Relay(env) => Some(EnvelopeMeta { origin: env.origin, relay: env.relay, inner: env.inner.digest() }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TraceEvent {
    Start,
    Deliver {
        from: ReplicaId,
        msg: String,
        digest: Digest,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        envelope: Option<EnvelopeMeta>,
    },
    Timer {
        id: TimerId,
        tag: TimerTag,
    },
    Send {
        to: ReplicaId,
        msg: String,
        digest: Digest,
        /// `None` when the network drops the message.
        deliver_at: Option<Tick>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        envelope: Option<EnvelopeMeta>,
    },
    Note(Note),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: Tick,
    pub seq: u64,
    pub replica: ReplicaId,
    /// Local clock of `replica` at `time`.
    pub local: Tick,
    pub event: TraceEvent,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trace {
    pub config: SimConfig,
    pub faults: NetworkFaults,
    pub honest: Vec<bool>,
    pub offsets: Vec<Tick>,
    pub records: Vec<TraceRecord>,
    pub end_time: Tick,
    pub non_terminating: bool,
}

impl Trace {
    pub fn honest_ids(&self) -> impl Iterator<Item = ReplicaId> + '_ {
        self.honest.iter().enumerate().filter(|(_, h)| **h).map(|(i, _)| ReplicaId(i))
    }

    pub fn is_honest(&self, r: ReplicaId) -> bool {
        self.honest.get(r.0).copied().unwrap_or(false)
    }

    /// Notes in log order, with the record that carried them.
    pub fn notes(&self) -> impl Iterator<Item = (&TraceRecord, &Note)> {
        self.records.iter().filter_map(|r| match &r.event {
            TraceEvent::Note(n) => Some((r, n)),
            _ => None,
        })
    }

    pub fn honest_notes(&self) -> impl Iterator<Item = (&TraceRecord, &Note)> {
        self.notes().filter(|(r, _)| self.is_honest(r.replica))
    }

    /// Writes one JSON object per record.
    pub fn write_records(&self, out: &mut impl Write) -> io::Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn records_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_records(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }
}
