//! Designated-sender broadcast: the agreement replica with the input
//! exchange replaced by one signed proposal from the sender.

use super::ba::{BaMode, BaNode, BaTiming};
use crate::types::{ReplicaId, Value};

pub fn broadcast_node(n: usize, f: usize, sender: ReplicaId, input: Option<Value>, timing: BaTiming) -> BaNode {
    BaNode::new(n, f, BaMode::Broadcast { sender, input }, timing)
}
