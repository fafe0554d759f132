//! Helpers shared by the integration test targets.

#![allow(dead_code)]

pub mod fallback_enum;

use std::path::PathBuf;

use onedelta::harness::Scenario;

pub fn scenario_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(file)
}

pub fn load(file: &str) -> Scenario {
    Scenario::load(&scenario_path(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

/// A single-seed scenario driven by a named lower-bound construction.
pub fn lower_bound(protocol: &str, n: usize, f: usize, delivery: &str, strategy: &str) -> Scenario {
    let text = format!(
        r#"
name = "{strategy}"
protocol = "{protocol}"
horizon = 5000

[sim]
n = {n}
f = {f}
Delta = 10
delta = 1
delivery = "{delivery}"
delay = {{ fixed = 1 }}

[faults]
strategy = "{strategy}"
"#
    );
    Scenario::from_toml(&text).expect("scenario parses")
}
