use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::basis::BasisFamily;
use crate::error::{Error, Result};
use crate::simulation::{CoverageMethod, Scenario};

use super::commands::{cmd_bootstrap, cmd_estimate, cmd_montecarlo, cmd_simulate, CommandReport, RunOptions};
use super::config::{
    default_levels, default_replicates, BasisBlock, CoverageBlock, DataBlock, DgpBlock, MonteCarloBlock, OutputBlock,
    RunConfig,
};

/// Projection-based interactive fixed effects for panel data.
#[derive(Debug, Parser)]
#[command(name = "panel-ife", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed (falls back to the config file, then PANEL_IFE_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all processors).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate slopes, factors and loadings for a panel CSV.
    Estimate(EstimateArgs),
    /// RMSE and coverage tables over simulated designs.
    Montecarlo(MonteCarloArgs),
    /// Write one simulated panel and its ground truth.
    Simulate(SimulateArgs),
    /// Bootstrap confidence intervals for a panel CSV.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    /// Basis family: polynomial or bspline.
    #[arg(long, value_parser = parse_family)]
    pub basis: Option<BasisFamily>,
    /// Basis functions per covariate.
    #[arg(long)]
    pub j: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Long-format panel CSV (unit,time,y,covariates...).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// Number of factors; chosen by eigenvalue ratio if omitted.
    #[arg(long)]
    pub k: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Confidence level(s), e.g. --level 0.95.
    #[arg(long)]
    pub level: Vec<f64>,
    /// Save the full fit as JSON.
    #[arg(long)]
    pub save_fit: Option<PathBuf>,
    /// Skip the SVG factor plot.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub level: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub gamma_var: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    /// Replications per cell (S).
    #[arg(long)]
    pub replications: Option<usize>,
    /// Cell size as NxT; repeat for several cells.
    #[arg(long, value_parser = parse_size)]
    pub size: Vec<(usize, usize)>,
    /// Also run a coverage study with these methods (pife-bootstrap, pc-ife-plugin).
    #[arg(long, value_parser = parse_method)]
    pub coverage: Vec<CoverageMethod>,
    /// Bootstrap replicates for coverage studies.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub gamma_var: Option<f64>,
}

fn parse_named<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_family(s: &str) -> std::result::Result<BasisFamily, String> {
    parse_named(s)
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    parse_named(s)
}

fn parse_method(s: &str) -> std::result::Result<CoverageMethod, String> {
    parse_named(s)
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (n, t) = s.split_once(['x', 'X', ',']).ok_or_else(|| format!("expected NxT, got {s:?}"))?;
    Ok((
        n.trim().parse().map_err(|_| format!("bad N in {s:?}"))?,
        t.trim().parse().map_err(|_| format!("bad T in {s:?}"))?,
    ))
}

fn apply_basis(config: &mut RunConfig, args: &BasisArgs) {
    if args.basis.is_some() || args.j.is_some() {
        let block = config.basis.get_or_insert_with(BasisBlock::default);
        if let Some(f) = args.basis {
            block.family = Some(f);
        }
        if let Some(j) = args.j {
            block.j = Some(j);
        }
    }
}

fn apply_data(config: &mut RunConfig, data: &Option<PathBuf>) -> Result<()> {
    if let Some(path) = data {
        if !path.is_file() {
            return Err(Error::InvalidConfig(format!("data file {} does not exist", path.display())));
        }
        config.dgp = None;
        let schema = config.data.take().map(|d| d.schema).unwrap_or_default();
        config.data = Some(DataBlock {
            path: path.clone(),
            schema,
        });
    }
    Ok(())
}

fn apply_bootstrap(config: &mut RunConfig, b: Option<usize>, levels: &[f64]) {
    let block = config.bootstrap.get_or_insert_with(Default::default);
    if b.is_some() {
        block.replicates = b;
    }
    if !levels.is_empty() {
        block.levels = Some(levels.to_vec());
    }
}

/// Merge the config file and flags into one configuration.
pub fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Estimate(a) => {
            apply_data(&mut config, &a.data)?;
            apply_basis(&mut config, &a.basis);
            apply_bootstrap(&mut config, a.bootstrap, &a.level);
            if a.k.is_some() {
                config.estimators.get_or_insert_with(Default::default).k = a.k;
            }
            if a.save_fit.is_some() || a.no_plot {
                let out = config.output.get_or_insert_with(OutputBlock::default);
                if a.save_fit.is_some() {
                    out.save_fit = a.save_fit.clone();
                }
                if a.no_plot {
                    out.plots = Some(false);
                }
            }
        }
        Command::Bootstrap(a) => {
            apply_data(&mut config, &a.data)?;
            apply_basis(&mut config, &a.basis);
            apply_bootstrap(&mut config, a.bootstrap, &a.level);
        }
        Command::Simulate(a) => {
            let block = config
                .dgp
                .get_or_insert_with(|| DgpBlock::new(a.scenario.unwrap_or(Scenario::GaussianStrong)));
            if let Some(s) = a.scenario {
                block.scenario = s;
            }
            block.n_units = a.n.or(block.n_units);
            block.n_periods = a.t.or(block.n_periods);
            block.gamma_var = a.gamma_var.or(block.gamma_var);
        }
        Command::Montecarlo(a) => {
            let block = config
                .dgp
                .get_or_insert_with(|| DgpBlock::new(a.scenario.unwrap_or(Scenario::GaussianStrong)));
            if let Some(s) = a.scenario {
                block.scenario = s;
            }
            block.gamma_var = a.gamma_var.or(block.gamma_var);
            if config.montecarlo.is_none() && a.replications.is_none() {
                return Err(Error::InvalidConfig("montecarlo needs --replications or a montecarlo block".into()));
            }
            let mc = config.montecarlo.get_or_insert_with(|| MonteCarloBlock {
                replications: 0,
                parallelism: None,
                sizes: None,
                coverage: None,
                dump_replicates: true,
            });
            if let Some(s) = a.replications {
                mc.replications = s;
            }
            if !a.size.is_empty() {
                mc.sizes = Some(a.size.clone());
            }
            if !a.coverage.is_empty() {
                let cov = mc.coverage.get_or_insert_with(|| CoverageBlock {
                    methods: Vec::new(),
                    levels: default_levels(),
                    bootstrap_replicates: default_replicates(),
                    only: false,
                });
                cov.methods = a.coverage.clone();
            }
            if let (Some(b), Some(cov)) = (a.bootstrap, mc.coverage.as_mut()) {
                cov.bootstrap_replicates = b;
            }
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<CommandReport> {
    let config = build_config(cli)?;
    let opts = RunOptions {
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Estimate(_) => cmd_estimate(&config, &opts),
        Command::Montecarlo(_) => cmd_montecarlo(&config, &opts),
        Command::Simulate(_) => cmd_simulate(&config, &opts),
        Command::Bootstrap(_) => cmd_bootstrap(&config, &opts),
    }
}

/// 1 for input and configuration errors, 2 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_input_error() {
        1
    } else {
        2
    }
}

/// Parse arguments, run, print, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(report) => {
            print!("{}", report.summary);
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
