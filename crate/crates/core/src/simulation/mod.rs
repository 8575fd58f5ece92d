//! Seeded data-generating processes and the Monte Carlo drivers built on
//! them.

mod dgp;
mod montecarlo;

pub use dgp::{generate, generate_replicate, DgpConfig, Scenario, SimulatedPanel};
pub use montecarlo::{
    rmse, run_coverage_studies, run_coverage_study, run_monte_carlo, CoverageMethod, CoverageResult, Estimator,
    EstimatorSummary, MonteCarloResult, ReplicateRecord, FAILURE_FLAG_FRACTION,
};
