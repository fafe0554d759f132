mod common;

use common::fallback_enum::{explore, F};
use onedelta::protocol::fallback::LockStepBa;

#[test]
fn every_byzantine_message_choice_preserves_agreement_validity_termination() {
    let summary = explore();
    println!("explored {} executions", summary.executions);
    assert!(summary.failures.is_empty(), "{} failures, first: {}", summary.failures.len(), summary.failures[0]);
    // Count the branches independently. For each Byzantine value v, the two
    // honest replicas either both skip it in round 1 (1 way), exactly one gets
    // it (2 ways, after which the relayed chain of length 2 may be offered to
    // either peer in round 2: 4 choices), or both get it (round 2: 4 choices,
    // and the doubly signed chain of length 3 may go to either peer in round
    // 3: 4 more). Per value that is 1 + 2*4 + 4*4 = 25 and values are
    // independent, so 625 per configuration, times 3 Byzantine positions and
    // 9 honest input pairs.
    assert_eq!(summary.executions, 3 * 9 * 25 * 25);
    assert_eq!(summary.max_rounds, F as u32 + 2);
    assert_eq!(LockStepBa::rounds(F), 3);
}
