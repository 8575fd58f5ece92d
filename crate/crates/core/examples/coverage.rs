//! Empirical coverage of bootstrap and plug-in intervals for b1.
//!
//! cargo run --release --example coverage [replications]

use panel_ife::simulation::{run_coverage_studies, CoverageMethod, DgpConfig, Scenario};

fn main() -> panel_ife::error::Result<()> {
    let s: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let levels = [0.90, 0.95, 0.99];
    let methods = [CoverageMethod::PifeBootstrap, CoverageMethod::PcIfePlugin];

    for scenario in [Scenario::GaussianStrong, Scenario::WeakFactors] {
        let dgp = DgpConfig::new(scenario, 100, 50, 20240603);
        for res in run_coverage_studies(&dgp, &methods, s, 199, &levels, jobs)? {
            println!(
                "{:<15} {:<15} coverage at {levels:?}: {:?} ({} failed)",
                scenario.name(),
                res.method.label(),
                res.coverage,
                res.failures
            );
        }
    }
    Ok(())
}
