//! Every message a replica can put on the wire.

use crate::chain::{Block, BlameCert, BlameVote, BlockProposal, BlockVote, StatusMsg, VoteCert};
use crate::codec::{decode_seq, encode_seq, Canonical, DecodeError, Decoder, Encoder};
use crate::types::{Digest, Proposal, ReplicaId, Signature, Value};

/// A value with one signature: an input, a designated sender's proposal,
/// or a vote on a value.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SignedValue {
    pub value: Value,
    pub sig: Signature,
}

impl Canonical for SignedValue {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.value).put(&self.sig);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(SignedValue { value: dec.get()?, sig: dec.get()? })
    }
}

/// A completed vote quorum on a value, rebroadcast on commit.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ValueVotes {
    pub value: Value,
    pub votes: Vec<Signature>,
}

impl Canonical for ValueVotes {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.value);
        encode_seq(enc, &self.votes);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ValueVotes { value: dec.get()?, votes: decode_seq(dec)? })
    }
}

/// Signature-chain message of one broadcast instance in the lock-step
/// fallback agreement. `chain[0]` must be the instance owner.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChainMsg {
    pub instance: ReplicaId,
    pub value: Value,
    pub chain: Vec<Signature>,
}

impl Canonical for ChainMsg {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.instance).put(&self.value);
        encode_seq(enc, &self.chain);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ChainMsg { instance: dec.get()?, value: dec.get()?, chain: decode_seq(dec)? })
    }
}

/// Wrapper used by the link-failure transformation.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RelayEnvelope {
    pub origin: ReplicaId,
    pub relay: bool,
    pub inner: Box<WireMessage>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum WireMessage {
    Input(SignedValue),
    Proposal(Proposal),
    SenderProposal(SignedValue),
    ValueVote(SignedValue),
    ValueVotes(ValueVotes),
    Chain(ChainMsg),
    Propose(BlockProposal),
    Block(Block),
    Vote(BlockVote),
    Cert(VoteCert),
    Blame(BlameVote),
    BlameCert(BlameCert),
    Status(StatusMsg),
    Relay(RelayEnvelope),
    /// Coordination channel between colluding Byzantine replicas that run
    /// several personas at once. Honest replicas ignore it.
    Lane { lane: u8, inner: Box<WireMessage> },
}

impl WireMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Input(_) => "input",
            WireMessage::Proposal(_) => "proposal",
            WireMessage::SenderProposal(_) => "sender-proposal",
            WireMessage::ValueVote(_) => "value-vote",
            WireMessage::ValueVotes(_) => "value-votes",
            WireMessage::Chain(_) => "chain",
            WireMessage::Propose(_) => "propose",
            WireMessage::Block(_) => "block",
            WireMessage::Vote(v) => v.kind.name(),
            WireMessage::Cert(_) => "cert",
            WireMessage::Blame(b) => b.kind.name(),
            WireMessage::BlameCert(_) => "blame-cert",
            WireMessage::Status(_) => "status",
            WireMessage::Relay(_) => "relay",
            WireMessage::Lane { .. } => "lane",
        }
    }

    pub fn digest(&self) -> Digest {
        Digest::of_canonical(self)
    }

    fn tag(&self) -> u8 {
        match self {
            WireMessage::Input(_) => 1,
            WireMessage::Proposal(_) => 2,
            WireMessage::SenderProposal(_) => 3,
            WireMessage::ValueVote(_) => 4,
            WireMessage::ValueVotes(_) => 5,
            WireMessage::Chain(_) => 6,
            WireMessage::Propose(_) => 7,
            WireMessage::Block(_) => 8,
            WireMessage::Vote(_) => 9,
            WireMessage::Cert(_) => 10,
            WireMessage::Blame(_) => 11,
            WireMessage::BlameCert(_) => 12,
            WireMessage::Status(_) => 13,
            WireMessage::Relay(_) => 14,
            WireMessage::Lane { .. } => 15,
        }
    }
}

impl Canonical for WireMessage {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.tag());
        match self {
            WireMessage::Input(m) | WireMessage::SenderProposal(m) | WireMessage::ValueVote(m) => m.encode(enc),
            WireMessage::Proposal(p) => p.encode(enc),
            WireMessage::ValueVotes(m) => m.encode(enc),
            WireMessage::Chain(m) => m.encode(enc),
            WireMessage::Propose(m) => m.encode(enc),
            WireMessage::Block(m) => m.encode(enc),
            WireMessage::Vote(m) => m.encode(enc),
            WireMessage::Cert(m) => m.encode(enc),
            WireMessage::Blame(m) => m.encode(enc),
            WireMessage::BlameCert(m) => m.encode(enc),
            WireMessage::Status(m) => m.encode(enc),
            WireMessage::Relay(env) => {
                enc.put(&env.origin).bool(env.relay).put(env.inner.as_ref());
            }
            WireMessage::Lane { lane, inner } => {
                enc.u8(*lane).put(inner.as_ref());
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            1 => WireMessage::Input(dec.get()?),
            2 => WireMessage::Proposal(dec.get()?),
            3 => WireMessage::SenderProposal(dec.get()?),
            4 => WireMessage::ValueVote(dec.get()?),
            5 => WireMessage::ValueVotes(dec.get()?),
            6 => WireMessage::Chain(dec.get()?),
            7 => WireMessage::Propose(dec.get()?),
            8 => WireMessage::Block(dec.get()?),
            9 => WireMessage::Vote(dec.get()?),
            10 => WireMessage::Cert(dec.get()?),
            11 => WireMessage::Blame(dec.get()?),
            12 => WireMessage::BlameCert(dec.get()?),
            13 => WireMessage::Status(dec.get()?),
            14 => WireMessage::Relay(RelayEnvelope {
                origin: dec.get()?,
                relay: dec.bool()?,
                inner: Box::new(dec.get()?),
            }),
            15 => WireMessage::Lane { lane: dec.u8()?, inner: Box::new(dec.get()?) },
            tag => return Err(DecodeError::UnknownTag { what: "wire message", tag }),
        })
    }
}
