//! Scenario runner and benchmark harness behind the `rotorsim` binary.

pub mod bench;
pub mod run;
pub mod scenario;
pub mod trace;

pub use run::{run_scenario, Overrides, RunError, RunSummary};
pub use scenario::Scenario;
