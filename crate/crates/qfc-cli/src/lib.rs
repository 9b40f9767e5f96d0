//! Library surface of the scenario runner, so integration tests and other
//! tooling can parse and execute scenarios in-process. The `qfc` binary is
//! a thin argument-handling wrapper around these two modules.

pub mod run;
pub mod scenario;

pub use run::{run_scenario, RunError, RunOutcome};
pub use scenario::{parse_scenario, Kind, Scenario, ScenarioError};
