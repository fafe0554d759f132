//! Simulation framework for synchronous Byzantine agreement and state
//! machine replication protocols with optimistic good-case latency.

pub mod chain;
pub mod codec;
pub mod sim;
pub mod types;
pub mod wire;
pub mod mlf;
pub mod protocol;
pub mod adversary;
pub mod harness;
