//! Slope estimation on a simulated panel with known coefficients.
//!
//! cargo run --release --example estimate

use panel_ife::basis::{BasisSpec, DimensionRule, ProjectionMethod, Projector};
use panel_ife::pife::{estimate_beta, estimate_beta_with};
use panel_ife::simulation::{generate, DgpConfig, Scenario};

fn main() -> panel_ife::error::Result<()> {
    let dgp = DgpConfig::new(Scenario::GaussianStrong, 100, 50, 7);
    let sim = generate(&dgp)?;
    let j = DimensionRule::Sim.dimension(dgp.n_units);

    let fit = estimate_beta(&sim.panel, &BasisSpec::polynomial(j))?;
    println!("true beta      {:?}", sim.true_beta.as_slice());
    println!("P-IFE beta     {:?}", fit.beta_hat.as_slice());
    println!("projector rank {} of {} columns", fit.projector_rank(), fit.basis.n_columns());

    // same estimate through the SVD projector
    let pinv = Projector::with_method(&fit.basis.phi, ProjectionMethod::Pinv);
    let alt = estimate_beta_with(&sim.panel, fit.basis.clone(), pinv)?;
    println!("via SVD        {:?}", alt.beta_hat.as_slice());

    let spline = estimate_beta(&sim.panel, &BasisSpec::bspline(5, 3))?;
    println!("B-spline beta  {:?}", spline.beta_hat.as_slice());
    for w in &fit.warnings {
        println!("warning: {w:?}");
    }
    Ok(())
}
