use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisSpec, DimensionRule, KnotRule, ProjectionMethod};
use crate::data::CsvSchema;
use crate::error::{Error, Result};
use crate::simulation::{CoverageMethod, DgpConfig, Estimator, Scenario};

/// Environment variable consulted when neither the flag nor the config file
/// sets a seed.
pub const SEED_ENV: &str = "PANEL_IFE_SEED";

/// One JSON document describing a run. Every block is optional; each
/// subcommand reads the blocks it needs and fills the rest with defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataBlock>,
    pub dgp: Option<DgpBlock>,
    pub basis: Option<BasisBlock>,
    pub estimators: Option<EstimatorsBlock>,
    pub bootstrap: Option<BootstrapBlock>,
    pub montecarlo: Option<MonteCarloBlock>,
    pub output: Option<OutputBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpBlock {
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    pub n_units: Option<usize>,
    pub n_periods: Option<usize>,
    pub k: Option<usize>,
    pub beta_true: Option<Vec<f64>>,
    pub ar_phi: Option<f64>,
    pub gamma_var: Option<f64>,
    pub error_sd: Option<f64>,
    pub seed: Option<u64>,
}

fn default_scenario() -> Scenario {
    Scenario::GaussianStrong
}

impl DgpBlock {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            n_units: None,
            n_periods: None,
            k: None,
            beta_true: None,
            ar_phi: None,
            gamma_var: None,
            error_sd: None,
            seed: None,
        }
    }

    /// Full DGP for the given size and seed, block values over defaults.
    pub fn resolve(&self, n_units: usize, n_periods: usize, seed: u64) -> DgpConfig {
        let mut dgp = DgpConfig::new(self.scenario, n_units, n_periods, seed);
        if let Some(k) = self.k {
            dgp.k = k;
        }
        if let Some(b) = &self.beta_true {
            dgp.beta_true = b.clone();
        }
        if let Some(phi) = self.ar_phi {
            dgp.ar_phi = phi;
        }
        if let Some(v) = self.gamma_var {
            dgp.gamma_var = v;
        }
        if let Some(sd) = self.error_sd {
            dgp.error_sd = sd;
        }
        dgp
    }

    pub fn size(&self) -> Result<(usize, usize)> {
        match (self.n_units, self.n_periods) {
            (Some(n), Some(t)) => Ok((n, t)),
            _ => Err(Error::InvalidConfig("dgp block needs n_units and n_periods".into())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisBlock {
    pub family: Option<BasisFamily>,
    /// Fixed J per covariate; overrides `rule`.
    pub j: Option<usize>,
    pub rule: Option<DimensionRule>,
    pub degree: Option<usize>,
    pub knot_rule: Option<KnotRule>,
    pub projection: Option<ProjectionMethod>,
}

impl BasisBlock {
    /// Basis for a panel with `n_units` units. Missing fields fall back to
    /// the given family and dimension rule. A rule-derived J is raised to
    /// `degree + 1` for B-splines; an explicit `j` is used as given.
    pub fn resolve(&self, n_units: usize, family: BasisFamily, rule: DimensionRule) -> BasisSpec {
        let family = self.family.unwrap_or(family);
        let degree = self.degree.unwrap_or(3);
        let j = self.j.unwrap_or_else(|| {
            let j = self.rule.unwrap_or(rule).dimension(n_units);
            match family {
                BasisFamily::BSpline => j.max(degree + 1),
                BasisFamily::Polynomial => j,
            }
        });
        let mut spec = match family {
            BasisFamily::Polynomial => BasisSpec::polynomial(j),
            BasisFamily::BSpline => BasisSpec::bspline(j, degree),
        };
        if let Some(k) = self.knot_rule {
            spec = spec.with_knot_rule(k);
        }
        spec
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorsBlock {
    /// Estimators compared in Monte Carlo runs.
    pub list: Option<Vec<Estimator>>,
    /// Number of factors; selected by the eigenvalue ratio when absent.
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapBlock {
    pub replicates: Option<usize>,
    pub levels: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub linear_combinations: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloBlock {
    pub replications: usize,
    pub parallelism: Option<usize>,
    /// `(N, T)` cells; defaults to the dgp block's size.
    pub sizes: Option<Vec<(usize, usize)>>,
    pub coverage: Option<CoverageBlock>,
    /// Write `replicate,estimator,coef,value` dumps per cell.
    #[serde(default = "yes")]
    pub dump_replicates: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageBlock {
    pub methods: Vec<CoverageMethod>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
    /// Skip the RMSE table and report coverage only.
    #[serde(default)]
    pub only: bool,
}

pub fn default_levels() -> Vec<f64> {
    vec![0.90, 0.95, 0.99]
}

pub fn default_replicates() -> usize {
    199
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub save_fit: Option<PathBuf>,
    pub plots: Option<bool>,
}

impl RunConfig {
    /// Parse and validate a config file. Relative data paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("config {}: {e}", path.display())))?;
        if let Some(data) = config.data.as_mut() {
            if data.path.is_relative() {
                if let Some(parent) = path.parent() {
                    data.path = parent.join(&data.path);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_some() && self.dgp.is_some() {
            return Err(Error::InvalidConfig("give either a data block or a dgp block, not both".into()));
        }
        if let Some(data) = &self.data {
            if !data.path.is_file() {
                return Err(Error::InvalidConfig(format!("data file {} does not exist", data.path.display())));
            }
        }
        if let Some(mc) = &self.montecarlo {
            if mc.replications == 0 {
                return Err(Error::InvalidConfig("montecarlo.replications must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Seed precedence: explicit flag, then config value, then `PANEL_IFE_SEED`,
/// then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer"))),
        Err(_) => Ok(0),
    }
}
