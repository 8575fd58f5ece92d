//! Build sieve bases on unit averages and project onto their span.
//!
//! cargo run --example basis_projection

use nalgebra::DMatrix;
use panel_ife::basis::{build_basis, build_projector, BasisSpec, DimensionRule, KnotRule};
use panel_ife::data::compute_time_averages;
use panel_ife::simulation::{generate, DgpConfig, Scenario};

fn main() -> panel_ife::error::Result<()> {
    let sim = generate(&DgpConfig::new(Scenario::GaussianStrong, 200, 10, 1))?;
    let xbar = compute_time_averages(&sim.panel);

    let j = DimensionRule::Sim.dimension(200);
    for spec in [
        BasisSpec::polynomial(j),
        BasisSpec::bspline(5, 3),
        BasisSpec::bspline(5, 3).with_knot_rule(KnotRule::Uniform),
    ] {
        let basis = build_basis(&xbar, &spec)?;
        let proj = build_projector(&basis);
        // share of the true systematic loadings captured by the sieve
        let g = &sim.true_g_of_xbar;
        let captured = proj.project(g).norm() / g.norm();
        println!(
            "{:?} J={} degree={}: {} columns, rank {}, |P g| / |g| = {captured:.6}",
            spec.family,
            spec.j_per_covariate,
            spec.bspline_degree,
            basis.n_columns(),
            proj.rank
        );
    }

    let basis = build_basis(&xbar, &BasisSpec::polynomial(3))?;
    let row = basis.evaluate_row(&[0.5, -0.25]);
    println!("phi(0.5, -0.25) = {:?}", row.values.as_slice());

    let proj = build_projector(&basis);
    let p = proj.project(&DMatrix::identity(200, 200));
    println!("trace(P) = {:.6}, |P^2 - P| = {:.2e}", p.trace(), (&p * &p - &p).amax());
    Ok(())
}
