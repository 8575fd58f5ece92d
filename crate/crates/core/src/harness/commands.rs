//! The four subcommands. Each reads the blocks of a [`RunConfig`] it needs,
//! writes its files into the output directory and returns a short summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, BasisFamily, BasisSpec, DimensionRule, Projector};
use crate::bootstrap::{bootstrap_panel, BootstrapConfig, BootstrapResult};
use crate::data::{compute_time_averages, load_panel_csv, write_panel_csv, PanelData};
use crate::error::{in_file, Error, Result};
use crate::linalg::{flat_vector, row_major};
use crate::pife::{
    estimate_beta_with, estimate_factors, loading_decomposition_norms, select_num_factors, FactorFit, LoadingNorms, PifeFit,
};
use crate::simulation::{
    generate, run_coverage_studies, run_monte_carlo, DgpConfig, Estimator, MonteCarloResult,
};

use super::config::{default_levels, default_replicates, resolve_seed, DgpBlock, RunConfig};
use super::plot::line_chart_svg;
use super::table::ResultTable;

/// Values given on the command line that are not part of a config block.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct CommandReport {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Everything the `estimate` command can save with `--save-fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedFit {
    pub pife_fit: PifeFit,
    pub factor_fit: FactorFit,
    /// Set when K came from the eigenvalue-ratio search.
    pub k_selected: Option<usize>,
    pub loading_norms: LoadingNorms,
    pub bootstrap: BootstrapResult,
    pub unit_ids: Vec<String>,
    pub time_ids: Vec<String>,
    pub covariate_names: Vec<String>,
}

/// Ground truth written next to a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub dgp: DgpConfig,
    #[serde(with = "flat_vector")]
    pub beta: nalgebra::DVector<f64>,
    #[serde(with = "row_major")]
    pub f: nalgebra::DMatrix<f64>,
    #[serde(with = "row_major")]
    pub lambda: nalgebra::DMatrix<f64>,
    #[serde(with = "row_major")]
    pub gamma: nalgebra::DMatrix<f64>,
    #[serde(with = "row_major")]
    pub g_of_xbar: nalgebra::DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetadata {
    pub n_units: usize,
    pub n_periods: usize,
    pub kind: String,
    pub wall_seconds: f64,
    /// `(label, failed replications)` per estimator or method.
    pub failures: Vec<(String, usize)>,
    pub flagged: bool,
}

/// Run metadata kept apart from the tables so the tables stay
/// byte-identical across worker counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub scenario: String,
    pub seed: u64,
    pub replications: usize,
    pub bootstrap_replicates: Option<usize>,
    pub jobs: usize,
    pub cells: Vec<CellMetadata>,
}

fn output_dir(config: &RunConfig, opts: &RunOptions) -> Result<PathBuf> {
    let dir = opts
        .out
        .clone()
        .or_else(|| config.output.as_ref().and_then(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    in_file(&dir, std::fs::create_dir_all(&dir).map_err(Error::from))?;
    Ok(dir)
}

fn jobs(config: &RunConfig, opts: &RunOptions) -> usize {
    opts.jobs
        .or_else(|| config.montecarlo.as_ref().and_then(|m| m.parallelism))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn write_text(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    in_file(&path, std::fs::write(&path, text).map_err(Error::from))?;
    files.push(path);
    Ok(())
}

fn write_table(table: &ResultTable, dir: &Path, stem: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    in_file(dir, table.write(dir, stem))?;
    files.push(dir.join(format!("{stem}.csv")));
    files.push(dir.join(format!("{stem}.txt")));
    Ok(())
}

fn level_tag(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}

fn load_data(config: &RunConfig) -> Result<(PanelData, PathBuf)> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("this command needs a data file (data block or --data)".into()))?;
    let panel = in_file(&data.path, load_panel_csv(&data.path, &data.schema))?;
    Ok((panel, data.path.clone()))
}

fn empirical_basis(config: &RunConfig, n_units: usize) -> BasisSpec {
    config
        .basis
        .clone()
        .unwrap_or_default()
        .resolve(n_units, BasisFamily::BSpline, DimensionRule::Empirical)
}

fn fit_pife(config: &RunConfig, panel: &PanelData, spec: &BasisSpec) -> Result<PifeFit> {
    let basis = build_basis(&compute_time_averages(panel), spec)?;
    let method = config.basis.as_ref().and_then(|b| b.projection).unwrap_or_default();
    let projector = Projector::with_method(&basis.phi, method);
    estimate_beta_with(panel, basis, projector)
}

fn bootstrap_config(config: &RunConfig, opts: &RunOptions) -> Result<(BootstrapConfig, Vec<f64>)> {
    let block = config.bootstrap.clone().unwrap_or_default();
    let levels = block.levels.clone().unwrap_or_else(|| vec![0.95]);
    if levels.is_empty() {
        return Err(Error::InvalidConfig("bootstrap.levels is empty".into()));
    }
    let seed = resolve_seed(opts.seed, block.seed)?;
    let mut boot = BootstrapConfig::new(block.replicates.unwrap_or_else(default_replicates), levels[0], seed);
    boot.linear_combinations = block.linear_combinations.unwrap_or_default();
    boot.validate()?;
    for &l in &levels {
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::InvalidConfig(format!("confidence level {l} not in (0,1)")));
        }
    }
    Ok((boot, levels))
}

fn coefficient_table(panel: &PanelData, boot: &BootstrapResult, levels: &[f64], caption: String) -> ResultTable {
    let mut columns = vec!["estimate".to_string()];
    for &l in levels {
        let tag = level_tag(l);
        columns.push(format!("q_{tag}"));
        columns.push(format!("lower_{tag}"));
        columns.push(format!("upper_{tag}"));
    }
    let mut table = ResultTable::new(caption, &["coefficient"], columns);
    for (j, name) in panel.covariate_names().iter().enumerate() {
        let mut cells = vec![Some(boot.beta_hat[j])];
        for &l in levels {
            let q = boot.quantile(j, l);
            cells.extend([Some(q), Some(boot.beta_hat[j] - q), Some(boot.beta_hat[j] + q)]);
        }
        table.push_row(vec![name.clone()], cells);
    }
    for v in &boot.linear_combinations {
        let centre: f64 = v.iter().zip(&boot.beta_hat).map(|(a, b)| a * b).sum();
        let mut cells = vec![Some(centre)];
        for &l in levels {
            let q = boot.combo_quantile(v, l);
            cells.extend([Some(q), Some(centre - q), Some(centre + q)]);
        }
        let label = v.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(" ");
        table.push_row(vec![format!("combination [{label}]")], cells);
    }
    table
}

/// Slope with bootstrap intervals, factor count, factors, loading norms and
/// an optional factor plot and saved fit, for a panel read from CSV.
pub fn cmd_estimate(config: &RunConfig, opts: &RunOptions) -> Result<CommandReport> {
    let (panel, path) = load_data(config)?;
    let dir = output_dir(config, opts)?;
    let spec = empirical_basis(config, panel.n_units());
    let fit = fit_pife(config, &panel, &spec)?;
    let (boot_config, levels) = bootstrap_config(config, opts)?;
    let boot = bootstrap_panel(&panel, &fit.projector, &boot_config)?;

    let estimators = config.estimators.clone().unwrap_or_default();
    let selection = match estimators.k {
        Some(_) => None,
        None => Some(select_num_factors(&fit, spec.j_per_covariate, panel.n_covariates())?),
    };
    let k = estimators.k.or(selection.as_ref().map(|s| s.k_hat)).unwrap_or(1);
    let factors = estimate_factors(&fit, k)?;
    let norms = loading_decomposition_norms(&factors);

    let mut files = Vec::new();
    let caption = format!(
        "P-IFE estimates for {} (N={}, T={}, J={}, {:?} basis, B={}, K={})",
        path.display(),
        panel.n_units(),
        panel.n_periods(),
        spec.j_per_covariate,
        spec.family,
        boot_config.n_replicates,
        k
    );
    let coef = coefficient_table(&panel, &boot, &levels, caption);
    write_table(&coef, &dir, "coefficients", &mut files)?;

    let mut ftab = ResultTable::new(
        format!("Estimated factors, K={k}, normalized to F'F/T = I"),
        &["time"],
        (1..=k).map(|c| format!("f{c}")).collect(),
    );
    for (t, id) in panel.time_ids().iter().enumerate() {
        ftab.push_row(vec![id.clone()], (0..k).map(|c| Some(factors.f_hat[(t, c)])).collect());
    }
    write_table(&ftab, &dir, "factors", &mut files)?;

    let mut ktab = ResultTable::new(
        "Eigenvalues of the projected residual gram matrix and successive ratios",
        &["k"],
        vec!["eigenvalue".into(), "ratio".into()],
    );
    let ratios = selection.as_ref().map(|s| s.ratios.clone()).unwrap_or_default();
    for (i, &ev) in factors.eigenvalues.iter().take(fit.projector_rank()).enumerate() {
        let ratio = ratios.get(i).copied().filter(|r| r.is_finite());
        ktab.push_row(vec![(i + 1).to_string()], vec![Some(ev), ratio]);
    }
    write_table(&ktab, &dir, "factor_count", &mut files)?;

    let mut ntab = ResultTable::new(
        "Norms of the sieve-explained and idiosyncratic loadings",
        &["component"],
        vec!["frobenius".into(), "max_abs".into()],
    );
    ntab.push_row(vec!["g".into()], vec![Some(norms.g_frob), Some(norms.g_max)]);
    ntab.push_row(vec!["gamma".into()], vec![Some(norms.gamma_frob), Some(norms.gamma_max)]);
    write_table(&ntab, &dir, "loading_norms", &mut files)?;

    let plots = config.output.as_ref().and_then(|o| o.plots).unwrap_or(true);
    if plots {
        let x: Vec<f64> = panel
            .time_ids()
            .iter()
            .enumerate()
            .map(|(t, id)| id.parse().unwrap_or(t as f64))
            .collect();
        let series: Vec<(String, Vec<f64>)> = (0..k)
            .map(|c| (format!("f{}", c + 1), factors.f_hat.column(c).iter().copied().collect()))
            .collect();
        write_text(dir.join("factors.svg"), &line_chart_svg("Estimated factors", &x, &series), &mut files)?;
    }

    if let Some(save) = config.output.as_ref().and_then(|o| o.save_fit.clone()) {
        let saved = SavedFit {
            pife_fit: fit.clone(),
            factor_fit: factors.clone(),
            k_selected: selection.as_ref().map(|s| s.k_hat),
            loading_norms: norms,
            bootstrap: boot.clone(),
            unit_ids: panel.unit_ids().to_vec(),
            time_ids: panel.time_ids().to_vec(),
            covariate_names: panel.covariate_names().to_vec(),
        };
        write_text(save, &serde_json::to_string_pretty(&saved)?, &mut files)?;
    }

    let mut summary = coef.to_text();
    summary.push_str(&format!("factors: K = {k}"));
    if selection.is_some() {
        summary.push_str(" (eigenvalue ratio)");
    }
    summary.push('\n');
    for w in fit.warnings.iter().chain(&factors.warnings) {
        summary.push_str(&format!("warning: {w:?}\n"));
    }
    Ok(CommandReport { summary, files })
}

/// Cross-sectional bootstrap intervals for a panel read from CSV.
pub fn cmd_bootstrap(config: &RunConfig, opts: &RunOptions) -> Result<CommandReport> {
    let (panel, path) = load_data(config)?;
    let dir = output_dir(config, opts)?;
    let spec = empirical_basis(config, panel.n_units());
    let fit = fit_pife(config, &panel, &spec)?;
    let (boot_config, levels) = bootstrap_config(config, opts)?;
    let boot = bootstrap_panel(&panel, &fit.projector, &boot_config)?;
    let caption = format!(
        "Cross-sectional bootstrap for {} (N={}, T={}, B={}, seed={})",
        path.display(),
        panel.n_units(),
        panel.n_periods(),
        boot_config.n_replicates,
        boot_config.seed
    );
    let table = coefficient_table(&panel, &boot, &levels, caption);
    let mut files = Vec::new();
    write_table(&table, &dir, "bootstrap", &mut files)?;
    write_text(dir.join("bootstrap.json"), &serde_json::to_string_pretty(&boot)?, &mut files)?;
    Ok(CommandReport {
        summary: table.to_text(),
        files,
    })
}

/// Draw one panel from the DGP block and write it with its ground truth.
pub fn cmd_simulate(config: &RunConfig, opts: &RunOptions) -> Result<CommandReport> {
    let block = config
        .dgp
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("simulate needs a dgp block".into()))?;
    let (n, t) = block.size()?;
    let seed = resolve_seed(opts.seed, block.seed)?;
    let dgp = block.resolve(n, t, seed);
    let sim = generate(&dgp)?;
    let dir = output_dir(config, opts)?;
    let mut files = Vec::new();
    let csv_path = dir.join("panel.csv");
    in_file(&csv_path, write_panel_csv(&sim.panel, &csv_path))?;
    files.push(csv_path);
    let truth = SimulationTruth {
        dgp: dgp.clone(),
        beta: sim.true_beta.clone(),
        f: sim.true_f.clone(),
        lambda: sim.true_lambda.clone(),
        gamma: sim.true_gamma.clone(),
        g_of_xbar: sim.true_g_of_xbar.clone(),
    };
    write_text(dir.join("truth.json"), &serde_json::to_string_pretty(&truth)?, &mut files)?;
    Ok(CommandReport {
        summary: format!(
            "simulated {} panel: N={n}, T={t}, seed={seed}\n",
            dgp.scenario.name()
        ),
        files,
    })
}

fn replicate_dump(result: &MonteCarloResult) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["replicate", "estimator", "coef", "value"]).expect("in-memory write");
    let q = result.dgp.beta_true.len();
    for rec in &result.records {
        for j in 0..q {
            let value = rec.beta_hat.as_ref().map_or("NA".to_string(), |b| b[j].to_string());
            wtr.write_record([rec.replicate.to_string(), rec.estimator.label().to_string(), (j + 1).to_string(), value])
                .expect("in-memory write");
        }
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// RMSE and coverage tables over a grid of `(N, T)` cells.
pub fn cmd_montecarlo(config: &RunConfig, opts: &RunOptions) -> Result<CommandReport> {
    let mc = config
        .montecarlo
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("montecarlo needs a montecarlo block".into()))?;
    let block = config.dgp.clone().unwrap_or_else(|| DgpBlock::new(crate::simulation::Scenario::GaussianStrong));
    let sizes = match &mc.sizes {
        Some(s) if !s.is_empty() => s.clone(),
        Some(_) => return Err(Error::InvalidConfig("montecarlo.sizes is empty".into())),
        None => vec![block.size()?],
    };
    let seed = resolve_seed(opts.seed, block.seed)?;
    let jobs = jobs(config, opts);
    let estimators = config
        .estimators
        .as_ref()
        .and_then(|e| e.list.clone())
        .unwrap_or_else(|| vec![Estimator::Pife, Estimator::Pols, Estimator::PcIfe]);
    let dir = output_dir(config, opts)?;
    let s = mc.replications;
    let coverage = mc.coverage.clone();
    let rmse_wanted = !coverage.as_ref().is_some_and(|c| c.only);

    let mut files = Vec::new();
    let mut cells = Vec::new();
    let q = block.resolve(2, 2, seed).beta_true.len();
    let mut rmse_table = ResultTable::new(
        format!("RMSE, scenario {}, S={s}, seed={seed}", block.scenario.name()),
        &["N", "T"],
        estimators
            .iter()
            .flat_map(|e| (1..=q).map(move |j| format!("{} b{j}", e.label())))
            .collect(),
    );
    let mut cov_table = coverage.as_ref().map(|c| {
        ResultTable::new(
            format!(
                "Empirical coverage for b1, scenario {}, S={s}, B={}, seed={seed}",
                block.scenario.name(),
                c.bootstrap_replicates
            ),
            &["N", "T"],
            c.methods
                .iter()
                .flat_map(|m| c.levels.iter().map(move |&l| format!("{} {}", m.label(), level_tag(l))))
                .collect(),
        )
    });

    for &(n, t) in &sizes {
        let dgp = block.resolve(n, t, seed);
        let keys = vec![n.to_string(), t.to_string()];
        if rmse_wanted {
            let start = Instant::now();
            let result = run_monte_carlo(&dgp, &estimators, s, jobs)?;
            let wall = start.elapsed().as_secs_f64();
            let row = estimators
                .iter()
                .flat_map(|&e| {
                    let summary = result.summary(e).expect("summary per estimator");
                    summary.rmse.iter().map(|&r| Some(r).filter(|v| v.is_finite())).collect::<Vec<_>>()
                })
                .collect();
            rmse_table.push_row(keys.clone(), row);
            if mc.dump_replicates {
                write_text(dir.join(format!("replicates_N{n}_T{t}.csv")), &replicate_dump(&result), &mut files)?;
            }
            cells.push(CellMetadata {
                n_units: n,
                n_periods: t,
                kind: "rmse".into(),
                wall_seconds: wall,
                failures: result.summaries.iter().map(|x| (x.estimator.label().into(), x.failures)).collect(),
                flagged: result.flagged,
            });
        }
        if let (Some(c), Some(table)) = (&coverage, cov_table.as_mut()) {
            let levels = if c.levels.is_empty() { default_levels() } else { c.levels.clone() };
            let start = Instant::now();
            let results = run_coverage_studies(&dgp, &c.methods, s, c.bootstrap_replicates, &levels, jobs)?;
            let wall = start.elapsed().as_secs_f64();
            let row = results
                .iter()
                .flat_map(|r| r.coverage.iter().map(|&v| Some(v).filter(|x| x.is_finite())).collect::<Vec<_>>())
                .collect();
            table.push_row(keys.clone(), row);
            cells.push(CellMetadata {
                n_units: n,
                n_periods: t,
                kind: "coverage".into(),
                wall_seconds: wall,
                failures: results.iter().map(|r| (r.method.label().into(), r.failures)).collect(),
                flagged: results.iter().any(|r| r.flagged),
            });
        }
    }

    let mut summary = String::new();
    if rmse_wanted {
        write_table(&rmse_table, &dir, "rmse", &mut files)?;
        summary.push_str(&rmse_table.to_text());
    }
    if let Some(table) = &cov_table {
        write_table(table, &dir, "coverage", &mut files)?;
        summary.push_str(&table.to_text());
    }
    for cell in cells.iter().filter(|c| c.flagged) {
        summary.push_str(&format!(
            "warning: {} cell N={}, T={} has failures above the flag threshold: {:?}\n",
            cell.kind, cell.n_units, cell.n_periods, cell.failures
        ));
    }
    let meta = RunMetadata {
        scenario: block.scenario.name().into(),
        seed,
        replications: s,
        bootstrap_replicates: coverage.as_ref().map(|c| c.bootstrap_replicates),
        jobs,
        cells,
    };
    write_text(dir.join("metadata.json"), &serde_json::to_string_pretty(&meta)?, &mut files)?;
    Ok(CommandReport { summary, files })
}
