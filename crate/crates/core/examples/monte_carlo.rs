//! RMSE of P-IFE, POLS and PC-IFE over replicated draws of a design.
//! Results do not depend on the number of worker threads.
//!
//! cargo run --release --example monte_carlo [replications]

use panel_ife::simulation::{run_monte_carlo, DgpConfig, Estimator, Scenario};

fn main() -> panel_ife::error::Result<()> {
    let s: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let estimators = [Estimator::Pife, Estimator::Pols, Estimator::PcIfe];

    println!("{:>5} {:>5} {:>10} {:>10} {:>10}", "N", "T", "P-IFE", "POLS", "PC-IFE");
    for (n, t) in [(20, 10), (100, 50), (100, 100)] {
        let dgp = DgpConfig::new(Scenario::GaussianStrong, n, t, 20240601);
        let result = run_monte_carlo(&dgp, &estimators, s, jobs)?;
        let rmse = |e| result.summary(e).map_or(f64::NAN, |x| x.rmse[0]);
        println!(
            "{n:>5} {t:>5} {:>10.4} {:>10.4} {:>10.4}",
            rmse(Estimator::Pife),
            rmse(Estimator::Pols),
            rmse(Estimator::PcIfe)
        );
    }
    Ok(())
}
