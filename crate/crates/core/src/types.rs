//! Identities, values, digests and simulated signatures.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::codec::{decode_seq, encode_seq, Canonical, DecodeError, Decoder, Encoder};

/// Index of a replica in `[0, n)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub usize);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Debug for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Canonical for ReplicaId {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.0 as u64);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ReplicaId(dec.u64()? as usize))
    }
}

/// 64-bit content digest: the leading 8 bytes of SHA-256.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub u64);

impl Digest {
    pub fn of(bytes: &[u8]) -> Digest {
        let full = Sha256::digest(bytes);
        Digest(u64::from_be_bytes(full[..8].try_into().expect("sha256 is 32 bytes")))
    }

    pub fn of_canonical<T: Canonical>(value: &T) -> Digest {
        Digest::of(&value.to_bytes())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", self.0))
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        u64::from_str_radix(&text, 16).map(Digest).map_err(serde::de::Error::custom)
    }
}

impl Canonical for Digest {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Digest(dec.u64()?))
    }
}

/// An agreement value. `Bottom` is the reserved default and never equals a
/// client-supplied payload.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bottom,
    Bytes(Vec<u8>),
}

impl Value {
    pub fn from_u64(v: u64) -> Value {
        Value::Bytes(v.to_be_bytes().to_vec())
    }

    pub fn as_u64(&self) -> Option<u64> {
        match self {
            Value::Bytes(b) if b.len() == 8 => Some(u64::from_be_bytes(b[..].try_into().ok()?)),
            _ => None,
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, Value::Bottom)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self, self.as_u64()) {
            (Value::Bottom, _) => write!(f, "bot"),
            (_, Some(v)) => write!(f, "{v}"),
            (Value::Bytes(b), None) => write!(f, "0x{}", hex::encode(b)),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bottom => s.serialize_str("bot"),
            Value::Bytes(b) => s.serialize_str(&format!("0x{}", hex::encode(b))),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text == "bot" {
            return Ok(Value::Bottom);
        }
        let body = text
            .strip_prefix("0x")
            .ok_or_else(|| serde::de::Error::custom("value must be `bot` or 0x-prefixed hex"))?;
        hex::decode(body).map(Value::Bytes).map_err(serde::de::Error::custom)
    }
}

impl Canonical for Value {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Value::Bottom => {
                enc.u8(0);
            }
            Value::Bytes(b) => {
                enc.u8(1).bytes(b);
            }
        }
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(Value::Bottom),
            1 => Ok(Value::Bytes(dec.bytes()?)),
            tag => Err(DecodeError::UnknownTag { what: "value", tag }),
        }
    }
}

/// Domain separation for everything a replica signs.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[repr(u8)]
pub enum SignTag {
    Input = 1,
    SenderProposal = 2,
    ValueVote = 3,
    Chain = 4,
    Propose = 5,
    Vote = 6,
    Ack = 7,
    Vote1 = 8,
    Vote2 = 9,
    Blame = 10,
    Blame1 = 11,
    Blame2 = 12,
    Status = 13,
}

/// Digest of a tagged payload; this is what signatures cover.
pub fn signing_digest(tag: SignTag, body: impl FnOnce(&mut Encoder)) -> Digest {
    let mut enc = Encoder::new();
    enc.u8(tag as u8);
    body(&mut enc);
    Digest::of(&enc.finish())
}

pub fn value_digest(tag: SignTag, value: &Value) -> Digest {
    signing_digest(tag, |e| {
        e.put(value);
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Signature {
    pub signer: ReplicaId,
    pub digest: Digest,
}

impl Signature {
    /// Builds a signature object without going through the authenticator.
    /// It never verifies unless `signer` really signed `digest`.
    pub fn fabricate(signer: ReplicaId, digest: Digest) -> Signature {
        Signature { signer, digest }
    }
}

impl Canonical for Signature {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.signer).put(&self.digest);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Signature { signer: dec.get()?, digest: dec.get()? })
    }
}

/// Per-run registry of every (signer, digest) pair produced through
/// [`Authenticator::sign`]. Verification is a membership test.
#[derive(Default, Debug, Clone)]
pub struct Authenticator {
    issued: HashSet<(ReplicaId, Digest)>,
}

impl Authenticator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sign(&mut self, signer: ReplicaId, digest: Digest) -> Signature {
        self.issued.insert((signer, digest));
        Signature { signer, digest }
    }

    pub fn verify(&self, sig: &Signature, expected: Digest) -> bool {
        sig.digest == expected && self.issued.contains(&(sig.signer, sig.digest))
    }

    pub fn issued_count(&self) -> usize {
        self.issued.len()
    }
}

/// Checks that `sigs` holds exactly `quorum` verifying signatures over
/// `digest` from distinct replicas in `[0, n)`.
pub fn verify_quorum(auth: &Authenticator, sigs: &[Signature], digest: Digest, n: usize, quorum: usize) -> bool {
    if sigs.len() != quorum {
        return false;
    }
    let mut signers = BTreeSet::new();
    sigs.iter().all(|s| s.signer.0 < n && signers.insert(s.signer) && auth.verify(s, digest))
}

/// f+1 signed inputs carrying the same value.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Proposal {
    pub value: Value,
    pub signatures: Vec<Signature>,
}

impl Canonical for Proposal {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.value);
        encode_seq(enc, &self.signatures);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Proposal { value: dec.get()?, signatures: decode_seq(dec)? })
    }
}

pub fn verify_proposal(auth: &Authenticator, p: &Proposal, n: usize, f: usize) -> bool {
    !p.value.is_bottom() && verify_quorum(auth, &p.signatures, value_digest(SignTag::Input, &p.value), n, f + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_inputs(auth: &mut Authenticator, entries: &[(usize, u64)]) -> Vec<Signature> {
        entries
            .iter()
            .map(|&(who, v)| auth.sign(ReplicaId(who), value_digest(SignTag::Input, &Value::from_u64(v))))
            .collect()
    }

    #[test]
    fn proposal_with_two_matching_inputs_is_valid() {
        let mut auth = Authenticator::new();
        let sigs = signed_inputs(&mut auth, &[(1, 0), (2, 0)]);
        let p = Proposal { value: Value::from_u64(0), signatures: sigs };
        assert!(verify_proposal(&auth, &p, 3, 1));
    }

    #[test]
    fn proposal_with_mixed_values_is_invalid() {
        let mut auth = Authenticator::new();
        let sigs = signed_inputs(&mut auth, &[(1, 0), (2, 1)]);
        let p = Proposal { value: Value::from_u64(0), signatures: sigs };
        assert!(!verify_proposal(&auth, &p, 3, 1));
    }

    #[test]
    fn proposal_with_duplicate_signer_is_invalid() {
        let mut auth = Authenticator::new();
        let sigs = signed_inputs(&mut auth, &[(1, 0), (1, 0)]);
        let p = Proposal { value: Value::from_u64(0), signatures: sigs };
        assert!(!verify_proposal(&auth, &p, 3, 1));
    }

    #[test]
    fn fabricated_signature_never_verifies() {
        let mut auth = Authenticator::new();
        let digest = value_digest(SignTag::Input, &Value::from_u64(4));
        auth.sign(ReplicaId(1), digest);
        assert!(!auth.verify(&Signature::fabricate(ReplicaId(0), digest), digest));
        assert!(auth.verify(&Signature::fabricate(ReplicaId(1), digest), digest));
    }

    #[test]
    fn bottom_differs_from_every_payload() {
        assert_ne!(Value::Bottom, Value::Bytes(vec![]));
        assert_ne!(Value::Bottom, Value::from_u64(0));
    }

    #[test]
    fn value_serde_round_trip() {
        for v in [Value::Bottom, Value::from_u64(17), Value::Bytes(vec![0xab])] {
            let text = serde_json::to_string(&v).unwrap();
            assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), v);
            assert_eq!(Value::from_bytes(&v.to_bytes()).unwrap(), v);
        }
    }
}
