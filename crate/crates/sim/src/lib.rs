//! Simulation scenarios for the subspace shrinkage prior: data-generating
//! functions, dataset generation, a replication driver comparing null
//! spaces and the P-spline baseline, and synthetic load-curve fixtures.

pub mod energy;
pub mod scenario;
pub mod truth;

pub use scenario::{
    cutoff_rule, generate, run_scenario, Dataset, GroupSummary, HarnessConfig, NamedNullSpace, ReplicationFailure,
    ReplicationRow, ScenarioId, ScenarioReport, ScenarioSpec,
};
pub use truth::{truth_scenario1, truth_scenario2, truth_scenario3};
