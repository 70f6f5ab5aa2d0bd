//! Simulated intent management loop: scenarios, the rbac-only baseline and
//! knowledge-base snapshots.

mod rbac;
mod runner;
mod scenario;
mod snapshot;

pub use rbac::rbac_only_authorize;
pub use runner::{
    run_scenario, AgentStats, RunError, RunOptions, ScenarioReport, StepOutcome, STATUS_COMPLETED, STATUS_STALLED,
};
pub use scenario::{scenario_prefixes, AgentSpec, Expectation, ScenarioConfig, ScenarioError, Step, SCENARIO_NS};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotError};
