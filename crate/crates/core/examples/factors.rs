//! Factor count selection, projected PCA and the loading decomposition.
//!
//! cargo run --release --example factors

use panel_ife::basis::BasisSpec;
use panel_ife::pife::{estimate_beta, estimate_factors, loading_decomposition_norms, select_num_factors};
use panel_ife::simulation::{generate, DgpConfig, Scenario};

fn main() -> panel_ife::error::Result<()> {
    let sim = generate(&DgpConfig::new(Scenario::GaussianStrong, 200, 60, 11))?;
    let j = 4;
    let fit = estimate_beta(&sim.panel, &BasisSpec::polynomial(j))?;

    let sel = select_num_factors(&fit, j, sim.panel.n_covariates())?;
    println!("eigenvalue ratios {:?}", sel.ratios);
    println!("selected K = {} (true K = {})", sel.k_hat, sim.true_f.ncols());

    let factors = estimate_factors(&fit, sel.k_hat)?;
    let t = sim.panel.n_periods() as f64;
    let gram = factors.f_hat.tr_mul(&factors.f_hat) / t;
    println!("F'F/T =\n{gram:.6}");

    // canonical correlations between estimated and true factor spaces
    let qf = factors.f_hat.clone().qr().q();
    let qt = sim.true_f.clone().qr().q();
    let sv = (qf.transpose() * qt).singular_values();
    println!("canonical correlations with true factors {:?}", sv.as_slice());

    let norms = loading_decomposition_norms(&factors);
    println!(
        "|G|_F = {:.3}, |Gamma|_F = {:.3}, max|Gamma| = {:.3}",
        norms.g_frob, norms.gamma_frob, norms.gamma_max
    );

    let (g, out_of_range) = factors.evaluate_g(&fit.basis, &[0.5, 0.5]);
    println!("g(0.5, 0.5) = {:?} (extrapolated: {out_of_range})", g.as_slice());
    Ok(())
}
