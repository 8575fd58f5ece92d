//! Cross-sectional bootstrap intervals for slopes and linear combinations.
//!
//! cargo run --release --example bootstrap

use panel_ife::basis::BasisSpec;
use panel_ife::bootstrap::{bootstrap_panel, BootstrapConfig};
use panel_ife::pife::estimate_beta;
use panel_ife::simulation::{generate, DgpConfig, Scenario};

fn main() -> panel_ife::error::Result<()> {
    let sim = generate(&DgpConfig::new(Scenario::WeakFactors, 100, 50, 5))?;
    let fit = estimate_beta(&sim.panel, &BasisSpec::polynomial(4))?;

    let mut config = BootstrapConfig::new(499, 0.95, 2024);
    config.linear_combinations = vec![vec![1.0, 1.0], vec![1.0, -2.0]];
    let boot = bootstrap_panel(&sim.panel, &fit.projector, &config)?;

    for j in 0..boot.beta_hat.len() {
        let (lo, hi) = boot.intervals[j];
        let (lo90, hi90) = boot.interval(j, 0.90);
        println!(
            "b{}: {:.4}  95% [{lo:.4}, {hi:.4}]  90% [{lo90:.4}, {hi90:.4}]  truth {}",
            j + 1,
            boot.beta_hat[j],
            sim.true_beta[j]
        );
    }
    for (v, (lo, hi)) in boot.linear_combinations.iter().zip(&boot.combo_intervals) {
        println!("{v:?}: 95% [{lo:.4}, {hi:.4}]");
    }
    println!("singular redraws: {}", boot.singular_redraws);
    Ok(())
}
