//! Write a panel to long-format CSV, read it back with a custom schema and
//! estimate on the result.
//!
//! cargo run --release --example csv_workflow

use panel_ife::basis::{BasisSpec, DimensionRule};
use panel_ife::bootstrap::{bootstrap_panel, BootstrapConfig};
use panel_ife::data::{load_panel_csv, write_panel_csv, CsvSchema};
use panel_ife::pife::estimate_beta;
use panel_ife::simulation::{generate, DgpConfig, Scenario};

fn main() -> panel_ife::error::Result<()> {
    let dir = std::env::temp_dir().join("panel-ife-csv-workflow");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("panel.csv");

    let sim = generate(&DgpConfig::new(Scenario::ManyFactors, 150, 30, 9))?;
    write_panel_csv(&sim.panel, &path)?;

    // read only the first covariate back
    let schema = CsvSchema {
        covariates: Some(vec!["x1".into()]),
        ..CsvSchema::default()
    };
    let reduced = load_panel_csv(&path, &schema)?;
    let full = load_panel_csv(&path, &CsvSchema::default())?;
    assert_eq!(full, sim.panel);

    let j = DimensionRule::Empirical.dimension(full.n_units()).max(4);
    for (label, panel) in [("x1, x2", &full), ("x1 only", &reduced)] {
        let fit = estimate_beta(panel, &BasisSpec::bspline(j, 3))?;
        let boot = bootstrap_panel(panel, &fit.projector, &BootstrapConfig::new(199, 0.95, 1))?;
        println!("{label:<8} beta {:?} intervals {:?}", boot.beta_hat, boot.intervals);
    }
    println!("panel written to {}", path.display());
    Ok(())
}
