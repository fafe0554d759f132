//! Scenario files, batch execution, property checks, reports and replay.

pub mod check;
pub mod exec;
pub mod export;
pub mod report;
pub mod scenario;

pub use check::{Check, CheckContext, Violation};
pub use exec::{execute, run_batch, run_batch_sequential, run_scenario, run_seed};
#[cfg(feature = "parallel")]
pub use exec::run_batch_parallel;
pub use report::{CsvRow, RunReport};
pub use scenario::{RunSpec, Scenario, ScenarioError};
