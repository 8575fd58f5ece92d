//! Pooled OLS and iterative principal components (PC-IFE) with plug-in
//! normal intervals.
//!
//! cargo run --release --example baselines

use panel_ife::baselines::{pc_ife_confidence_interval, pc_ife_estimate, pooled_ols, LoadingCorrection, PcIfeOptions};
use panel_ife::simulation::{generate, DgpConfig, Scenario};

fn main() -> panel_ife::error::Result<()> {
    let dgp = DgpConfig::new(Scenario::Ar1Errors, 100, 50, 3);
    let sim = generate(&dgp)?;
    println!("true beta {:?}", sim.true_beta.as_slice());
    println!("POLS      {:?}", pooled_ols(&sim.panel)?.as_slice());

    for correction in [LoadingCorrection::Unnormalized, LoadingCorrection::Normalized] {
        let options = PcIfeOptions {
            loading_correction: correction,
            ..PcIfeOptions::default()
        };
        let fit = pc_ife_estimate(&sim.panel, dgp.k, options)?;
        let ci = pc_ife_confidence_interval(&fit, 0.95)?;
        println!(
            "PC-IFE ({correction:?}) {:?} after {} iterations, 95% intervals {ci:?}",
            fit.beta_hat.as_slice(),
            fit.iterations
        );
    }
    Ok(())
}
