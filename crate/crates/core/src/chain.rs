//! Hash-chained blocks, certificates and the replication message bodies.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_opt, decode_seq, encode_opt, encode_seq, Canonical, DecodeError, Decoder, Encoder};
use crate::types::{signing_digest, verify_quorum, Authenticator, Digest, ReplicaId, SignTag, Signature};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub Digest);

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", &self.0.to_string()[..8])
    }
}

impl Canonical for BlockId {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlockId(dec.get()?))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub height: u64,
    pub batch: Vec<u8>,
    pub parent: BlockId,
}

impl Block {
    pub fn genesis() -> Block {
        Block { height: 0, batch: Vec::new(), parent: BlockId(Digest(0)) }
    }

    pub fn child_of(parent: &Block, batch: Vec<u8>) -> Block {
        Block { height: parent.height + 1, batch, parent: parent.id() }
    }

    pub fn id(&self) -> BlockId {
        BlockId(Digest::of_canonical(self))
    }

    pub fn is_genesis(&self) -> bool {
        self.height == 0
    }
}

impl Canonical for Block {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height).bytes(&self.batch).put(&self.parent);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Block { height: dec.u64()?, batch: dec.bytes()?, parent: dec.get()? })
    }
}

/// Blocks known to one replica, keyed by id. Genesis is always present.
#[derive(Clone, Debug)]
pub struct BlockStore {
    blocks: HashMap<BlockId, Block>,
    genesis: BlockId,
}

impl Default for BlockStore {
    fn default() -> Self {
        let genesis = Block::genesis();
        let id = genesis.id();
        let mut blocks = HashMap::new();
        blocks.insert(id, genesis);
        BlockStore { blocks, genesis: id }
    }
}

impl BlockStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn genesis_id(&self) -> BlockId {
        self.genesis
    }

    /// Returns true when the block was not known before.
    pub fn insert(&mut self, block: Block) -> bool {
        let id = block.id();
        if self.blocks.contains_key(&id) {
            return false;
        }
        self.blocks.insert(id, block);
        true
    }

    pub fn get(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.get(id)
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.blocks.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Walks parent links from `id` down to `height`. `None` if a block on
    /// the way is unknown or `height` exceeds the start block's height.
    pub fn ancestor_at(&self, id: BlockId, height: u64) -> Option<BlockId> {
        let mut cur = id;
        loop {
            let block = self.blocks.get(&cur)?;
            match block.height.cmp(&height) {
                Ordering::Equal => return Some(cur),
                Ordering::Less => return None,
                Ordering::Greater => cur = block.parent,
            }
        }
    }

    /// `Some(true)` iff `ancestor` lies on `descendant`'s parent chain
    /// (reflexive). `None` when the answer depends on unknown blocks.
    pub fn extends(&self, descendant: BlockId, ancestor: BlockId) -> Option<bool> {
        if descendant == ancestor {
            return Some(true);
        }
        let target = self.blocks.get(&ancestor)?.height;
        let top = self.blocks.get(&descendant)?.height;
        if top < target {
            return Some(false);
        }
        self.ancestor_at(descendant, target).map(|found| found == ancestor)
    }

    /// Like [`BlockStore::extends`] but works from a known height of the
    /// ancestor, so the ancestor itself need not be stored.
    pub fn extends_at(&self, descendant: BlockId, ancestor: BlockId, ancestor_height: u64) -> Option<bool> {
        if descendant == ancestor {
            return Some(true);
        }
        let top = self.blocks.get(&descendant)?.height;
        if top < ancestor_height {
            return Some(false);
        }
        self.ancestor_at(descendant, ancestor_height).map(|found| found == ancestor)
    }

    /// First unknown block on the parent chain of `id`, if any.
    pub fn missing_ancestor(&self, id: BlockId) -> Option<BlockId> {
        let mut cur = id;
        loop {
            match self.blocks.get(&cur) {
                None => return Some(cur),
                Some(b) if b.is_genesis() => return if cur == self.genesis { None } else { Some(cur) },
                Some(b) => cur = b.parent,
            }
        }
    }

    pub fn chain_known(&self, id: BlockId) -> bool {
        self.missing_ancestor(id).is_none()
    }

    /// Ids from height 1 up to and including `id`. Requires a known chain.
    pub fn chain(&self, id: BlockId) -> Option<Vec<BlockId>> {
        let mut out = Vec::new();
        let mut cur = id;
        loop {
            let b = self.blocks.get(&cur)?;
            if b.is_genesis() {
                break;
            }
            out.push(cur);
            cur = b.parent;
        }
        out.reverse();
        Some(out)
    }

    /// Whether two blocks are distinct and neither extends the other.
    /// `None` when unknown blocks prevent a decision.
    pub fn equivocate(&self, a: BlockId, b: BlockId) -> Option<bool> {
        if a == b {
            return Some(false);
        }
        let ha = self.blocks.get(&a)?.height;
        let hb = self.blocks.get(&b)?.height;
        if ha == hb {
            return Some(true);
        }
        let (low, high, low_h) = if ha < hb { (a, b, ha) } else { (b, a, hb) };
        self.ancestor_at(high, low_h).map(|found| found != low)
    }
}

/// Certificate rank: view first, then height.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Rank {
    pub view: i64,
    pub height: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteKind {
    Vote,
    Ack,
    Vote1,
    Vote2,
}

impl VoteKind {
    fn tag(self) -> SignTag {
        match self {
            VoteKind::Vote => SignTag::Vote,
            VoteKind::Ack => SignTag::Ack,
            VoteKind::Vote1 => SignTag::Vote1,
            VoteKind::Vote2 => SignTag::Vote2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VoteKind::Vote => "vote",
            VoteKind::Ack => "ack",
            VoteKind::Vote1 => "vote1",
            VoteKind::Vote2 => "vote2",
        }
    }

    fn code(self) -> u8 {
        match self {
            VoteKind::Vote => 0,
            VoteKind::Ack => 1,
            VoteKind::Vote1 => 2,
            VoteKind::Vote2 => 3,
        }
    }
}

impl Canonical for VoteKind {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.code());
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(VoteKind::Vote),
            1 => Ok(VoteKind::Ack),
            2 => Ok(VoteKind::Vote1),
            3 => Ok(VoteKind::Vote2),
            tag => Err(DecodeError::UnknownTag { what: "vote kind", tag }),
        }
    }
}

pub fn vote_digest(kind: VoteKind, block: BlockId, height: u64, view: u64) -> Digest {
    signing_digest(kind.tag(), |e| {
        e.put(&block).u64(height).u64(view);
    })
}

/// One replica's signed vote, ack, vote1 or vote2 on a block.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlockVote {
    pub kind: VoteKind,
    pub block: BlockId,
    pub height: u64,
    pub view: u64,
    pub sig: Signature,
}

impl BlockVote {
    pub fn digest(&self) -> Digest {
        vote_digest(self.kind, self.block, self.height, self.view)
    }

    pub fn verify(&self, auth: &Authenticator, n: usize) -> bool {
        self.sig.signer.0 < n && auth.verify(&self.sig, self.digest())
    }
}

impl Canonical for BlockVote {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.kind).put(&self.block).u64(self.height).u64(self.view).put(&self.sig);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlockVote { kind: dec.get()?, block: dec.get()?, height: dec.u64()?, view: dec.u64()?, sig: dec.get()? })
    }
}

/// f+1 distinct signatures of one kind on one block in one view. The
/// genesis certificate has view -1 and no signatures.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct VoteCert {
    pub kind: VoteKind,
    pub view: i64,
    pub block: BlockId,
    pub height: u64,
    pub votes: Vec<Signature>,
}

impl VoteCert {
    pub fn genesis(kind: VoteKind) -> VoteCert {
        VoteCert { kind, view: -1, block: Block::genesis().id(), height: 0, votes: Vec::new() }
    }

    pub fn is_genesis(&self) -> bool {
        self.view < 0
    }

    pub fn rank(&self) -> Rank {
        Rank { view: self.view, height: self.height }
    }

    pub fn verify(&self, auth: &Authenticator, n: usize, f: usize) -> bool {
        if self.is_genesis() {
            return *self == VoteCert::genesis(self.kind);
        }
        let digest = vote_digest(self.kind, self.block, self.height, self.view as u64);
        verify_quorum(auth, &self.votes, digest, n, f + 1)
    }
}

impl Canonical for VoteCert {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.kind).i64(self.view).put(&self.block).u64(self.height);
        encode_seq(enc, &self.votes);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(VoteCert {
            kind: dec.get()?,
            view: dec.i64()?,
            block: dec.get()?,
            height: dec.u64()?,
            votes: decode_seq(dec)?,
        })
    }
}

pub fn rank_cert(a: &VoteCert, b: &VoteCert) -> Ordering {
    a.rank().cmp(&b.rank())
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlameKind {
    Blame,
    Blame1,
    Blame2,
}

impl BlameKind {
    fn tag(self) -> SignTag {
        match self {
            BlameKind::Blame => SignTag::Blame,
            BlameKind::Blame1 => SignTag::Blame1,
            BlameKind::Blame2 => SignTag::Blame2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BlameKind::Blame => "blame",
            BlameKind::Blame1 => "blame1",
            BlameKind::Blame2 => "blame2",
        }
    }
}

impl Canonical for BlameKind {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            BlameKind::Blame => 0,
            BlameKind::Blame1 => 1,
            BlameKind::Blame2 => 2,
        });
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(BlameKind::Blame),
            1 => Ok(BlameKind::Blame1),
            2 => Ok(BlameKind::Blame2),
            tag => Err(DecodeError::UnknownTag { what: "blame kind", tag }),
        }
    }
}

pub fn blame_digest(kind: BlameKind, view: u64) -> Digest {
    signing_digest(kind.tag(), |e| {
        e.u64(view);
    })
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlameVote {
    pub kind: BlameKind,
    pub view: u64,
    pub sig: Signature,
}

impl BlameVote {
    pub fn verify(&self, auth: &Authenticator, n: usize) -> bool {
        self.sig.signer.0 < n && auth.verify(&self.sig, blame_digest(self.kind, self.view))
    }
}

impl Canonical for BlameVote {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.kind).u64(self.view).put(&self.sig);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlameVote { kind: dec.get()?, view: dec.u64()?, sig: dec.get()? })
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlameCert {
    pub kind: BlameKind,
    pub view: u64,
    pub blames: Vec<Signature>,
}

impl BlameCert {
    pub fn verify(&self, auth: &Authenticator, n: usize, f: usize) -> bool {
        verify_quorum(auth, &self.blames, blame_digest(self.kind, self.view), n, f + 1)
    }
}

impl Canonical for BlameCert {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.kind).u64(self.view);
        encode_seq(enc, &self.blames);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlameCert { kind: dec.get()?, view: dec.u64()?, blames: decode_seq(dec)? })
    }
}

/// Sent to the next leader on entering a view; `view` is the view being left.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StatusMsg {
    pub cert: VoteCert,
    pub view: u64,
    pub sig: Signature,
}

pub fn status_digest(cert: &VoteCert, view: u64) -> Digest {
    signing_digest(SignTag::Status, |e| {
        e.put(cert).u64(view);
    })
}

impl StatusMsg {
    pub fn verify(&self, auth: &Authenticator, n: usize, f: usize) -> bool {
        self.sig.signer.0 < n && auth.verify(&self.sig, status_digest(&self.cert, self.view)) && self.cert.verify(auth, n, f)
    }
}

impl Canonical for StatusMsg {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.cert).u64(self.view).put(&self.sig);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(StatusMsg { cert: dec.get()?, view: dec.u64()?, sig: dec.get()? })
    }
}

impl Canonical for Vec<StatusMsg> {
    fn encode(&self, enc: &mut Encoder) {
        encode_seq(enc, self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        decode_seq(dec)
    }
}

/// A leader's signed block proposal; `status` is present only on the first
/// proposal after a view change.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlockProposal {
    pub block: Block,
    pub status: Option<Vec<StatusMsg>>,
    pub view: u64,
    pub sig: Signature,
}

pub fn proposal_digest(block: BlockId, status: &Option<Vec<StatusMsg>>, view: u64) -> Digest {
    signing_digest(SignTag::Propose, |e| {
        e.put(&block);
        encode_opt(e, status);
        e.u64(view);
    })
}

impl BlockProposal {
    pub fn digest(&self) -> Digest {
        proposal_digest(self.block.id(), &self.status, self.view)
    }

    pub fn verify_from(&self, auth: &Authenticator, leader: ReplicaId) -> bool {
        self.sig.signer == leader && auth.verify(&self.sig, self.digest())
    }
}

impl Canonical for BlockProposal {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.block);
        encode_opt(enc, &self.status);
        enc.u64(self.view).put(&self.sig);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlockProposal { block: dec.get()?, status: decode_opt(dec)?, view: dec.u64()?, sig: dec.get()? })
    }
}

/// Equivocation between two proposals of one leader in one view: both
/// carry a status set and differ. Block-level equivocation is decided by
/// [`BlockStore::equivocate`].
pub fn proposals_equivocate(x: &BlockProposal, y: &BlockProposal) -> bool {
    x.view == y.view && x.sig.signer == y.sig.signer && x.status.is_some() && y.status.is_some() && x != y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(store: &mut BlockStore, len: usize, tag: u8) -> Vec<Block> {
        let mut out = vec![Block::genesis()];
        for _ in 0..len {
            let b = Block::child_of(out.last().unwrap(), vec![tag, out.len() as u8]);
            store.insert(b.clone());
            out.push(b);
        }
        out
    }

    fn cert(view: i64, height: u64) -> VoteCert {
        VoteCert { kind: VoteKind::Vote, view, block: BlockId(Digest(height)), height, votes: vec![] }
    }

    #[test]
    fn rank_orders_by_view_then_height() {
        assert_eq!(rank_cert(&cert(2, 5), &cert(1, 9)), Ordering::Greater);
        assert_eq!(rank_cert(&cert(1, 5), &cert(1, 5)), Ordering::Equal);
        assert_eq!(rank_cert(&cert(1, 4), &cert(1, 7)), Ordering::Less);
        assert_eq!(rank_cert(&VoteCert::genesis(VoteKind::Vote), &cert(0, 1)), Ordering::Less);
    }

    #[test]
    fn ancestor_does_not_equivocate() {
        let mut store = BlockStore::new();
        let c = chain(&mut store, 3, 1);
        assert_eq!(store.equivocate(c[3].id(), c[1].id()), Some(false));
        assert_eq!(store.extends(c[3].id(), c[1].id()), Some(true));
        assert_eq!(store.extends(c[1].id(), c[3].id()), Some(false));
    }

    #[test]
    fn same_height_different_parents_equivocate() {
        let mut store = BlockStore::new();
        let a = chain(&mut store, 2, 1);
        let b = chain(&mut store, 2, 2);
        let x = Block::child_of(&a[2], vec![9]);
        let y = Block::child_of(&b[2], vec![9]);
        store.insert(x.clone());
        store.insert(y.clone());
        assert_eq!(x.height, 3);
        assert_eq!(store.equivocate(x.id(), y.id()), Some(true));
        assert_eq!(store.equivocate(a[1].id(), b[2].id()), Some(true));
    }

    #[test]
    fn unknown_ancestry_is_undecided() {
        let mut store = BlockStore::new();
        let g = Block::genesis();
        let b1 = Block::child_of(&g, vec![1]);
        let b2 = Block::child_of(&b1, vec![2]);
        store.insert(b2.clone());
        assert!(!store.chain_known(b2.id()));
        assert_eq!(store.missing_ancestor(b2.id()), Some(b1.id()));
        assert_eq!(store.extends(b2.id(), g.id()), None);
        store.insert(b1.clone());
        assert!(store.chain_known(b2.id()));
        assert_eq!(store.chain(b2.id()).unwrap(), vec![b1.id(), b2.id()]);
    }

    #[test]
    fn first_proposals_with_status_equivocate() {
        let sig = Signature::fabricate(ReplicaId(1), Digest(0));
        let g = Block::genesis();
        let p = |batch: u8| BlockProposal {
            block: Block::child_of(&g, vec![batch]),
            status: Some(vec![]),
            view: 1,
            sig,
        };
        assert!(proposals_equivocate(&p(1), &p(2)));
        assert!(!proposals_equivocate(&p(1), &p(1)));
        let mut later = p(2);
        later.status = None;
        assert!(!proposals_equivocate(&p(1), &later));
    }

    #[test]
    fn certificate_needs_f_plus_one_distinct_signers() {
        let mut auth = Authenticator::new();
        let b = Block::child_of(&Block::genesis(), vec![1]);
        let d = vote_digest(VoteKind::Vote, b.id(), 1, 0);
        let s0 = auth.sign(ReplicaId(0), d);
        let s1 = auth.sign(ReplicaId(1), d);
        let mk = |votes| VoteCert { kind: VoteKind::Vote, view: 0, block: b.id(), height: 1, votes };
        assert!(mk(vec![s0, s1]).verify(&auth, 3, 1));
        assert!(!mk(vec![s0, s0]).verify(&auth, 3, 1));
        assert!(!mk(vec![s0]).verify(&auth, 3, 1));
        assert!(VoteCert::genesis(VoteKind::Vote).verify(&auth, 3, 1));
    }
}
