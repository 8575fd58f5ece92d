use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{pc_ife_confidence_interval, pc_ife_estimate, pooled_ols, PcIfeOptions};
use crate::basis::{BasisSpec, DimensionRule};
use crate::bootstrap::{bootstrap_beta, residualize_panel, BootstrapConfig};
use crate::error::{Error, Result};
use crate::pife::estimate_beta;
use crate::rng::derive_seed;

use super::dgp::{generate_replicate, DgpConfig};

/// Runs with a larger share of failed cells than this are flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Pife,
    Pols,
    PcIfe,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Pife => "P-IFE",
            Estimator::Pols => "POLS",
            Estimator::PcIfe => "PC-IFE",
        }
    }

    /// Slope estimate for one simulated panel. P-IFE uses the polynomial
    /// basis with the simulation dimension rule; PC-IFE gets the true K.
    pub fn estimate(self, panel: &crate::data::PanelData, k_true: usize) -> Result<Vec<f64>> {
        let beta = match self {
            Estimator::Pife => {
                let j = DimensionRule::Sim.dimension(panel.n_units());
                estimate_beta(panel, &BasisSpec::polynomial(j))?.beta_hat
            }
            Estimator::Pols => pooled_ols(panel)?,
            Estimator::PcIfe => pc_ife_estimate(panel, k_true, PcIfeOptions::default())?.beta_hat,
        };
        Ok(beta.iter().copied().collect())
    }
}

/// One estimator's output in one replication; `None` marks a failed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub estimator: Estimator,
    pub beta_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub rmse: Vec<f64>,
    pub bias: Vec<f64>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub dgp: DgpConfig,
    pub replications: usize,
    pub summaries: Vec<EstimatorSummary>,
    pub records: Vec<ReplicateRecord>,
    /// Some estimator failed in more than `FAILURE_FLAG_FRACTION` of runs.
    pub flagged: bool,
}

impl MonteCarloResult {
    pub fn summary(&self, estimator: Estimator) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == estimator)
    }
}

/// `sqrt(mean((estimate - truth)^2))`.
pub fn rmse(estimates: &[f64], truth: f64) -> f64 {
    (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt()
}

fn with_pool<T: Send>(parallelism: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// RMSE and bias of each estimator over `replications` draws of `dgp`.
/// Replicate `r` uses substream `(dgp.seed, r)`; results are reduced in
/// replicate order so the output does not depend on `parallelism`.
pub fn run_monte_carlo(
    dgp: &DgpConfig,
    estimators: &[Estimator],
    replications: usize,
    parallelism: usize,
) -> Result<MonteCarloResult> {
    dgp.validate()?;
    if replications == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    let per_rep: Vec<Result<Vec<Option<Vec<f64>>>>> = with_pool(parallelism, || {
        (0..replications)
            .into_par_iter()
            .map(|r| {
                let sim = generate_replicate(dgp, r as u64)?;
                Ok(estimators.iter().map(|e| e.estimate(&sim.panel, dgp.k).ok()).collect())
            })
            .collect()
    })?;

    let mut records = Vec::with_capacity(replications * estimators.len());
    for (r, cells) in per_rep.into_iter().enumerate() {
        for (e, beta) in estimators.iter().zip(cells?) {
            records.push(ReplicateRecord {
                replicate: r,
                estimator: *e,
                beta_hat: beta,
            });
        }
    }

    let q = dgp.beta_true.len();
    let summaries: Vec<EstimatorSummary> = estimators
        .iter()
        .map(|&e| {
            let ok: Vec<&Vec<f64>> = records
                .iter()
                .filter(|rec| rec.estimator == e)
                .filter_map(|rec| rec.beta_hat.as_ref())
                .collect();
            let coef = |j: usize| ok.iter().map(|b| b[j]).collect::<Vec<f64>>();
            EstimatorSummary {
                estimator: e,
                rmse: (0..q).map(|j| if ok.is_empty() { f64::NAN } else { rmse(&coef(j), dgp.beta_true[j]) }).collect(),
                bias: (0..q)
                    .map(|j| coef(j).iter().map(|b| b - dgp.beta_true[j]).sum::<f64>() / ok.len() as f64)
                    .collect(),
                successes: ok.len(),
                failures: replications - ok.len(),
            }
        })
        .collect();
    let flagged = summaries
        .iter()
        .any(|s| s.failures as f64 > FAILURE_FLAG_FRACTION * replications as f64);
    Ok(MonteCarloResult {
        dgp: dgp.clone(),
        replications,
        summaries,
        records,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageMethod {
    /// Cross-sectional bootstrap around the P-IFE estimate.
    PifeBootstrap,
    /// Normal intervals from the PC-IFE plug-in covariance.
    PcIfePlugin,
}

impl CoverageMethod {
    pub fn label(self) -> &'static str {
        match self {
            CoverageMethod::PifeBootstrap => "P-IFE",
            CoverageMethod::PcIfePlugin => "PC-IFE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub method: CoverageMethod,
    pub levels: Vec<f64>,
    /// Fraction of successful replications whose interval for the first
    /// coefficient contains the truth, per level.
    pub coverage: Vec<f64>,
    pub replications: usize,
    pub failures: usize,
    pub flagged: bool,
}

/// Interval-contains-truth indicators per level for one replication.
fn covers(
    method: CoverageMethod,
    sim: &super::SimulatedPanel,
    k_true: usize,
    b: usize,
    levels: &[f64],
    boot_seed: u64,
) -> Result<Vec<bool>> {
    let truth = sim.true_beta[0];
    let intervals: Vec<(f64, f64)> = match method {
        CoverageMethod::PifeBootstrap => {
            let panel = &sim.panel;
            let j = DimensionRule::Sim.dimension(panel.n_units());
            let fit = estimate_beta(panel, &BasisSpec::polynomial(j))?;
            let config = BootstrapConfig::new(b, levels[0], boot_seed);
            let boot = bootstrap_beta(&residualize_panel(panel, &fit.projector), &config)?;
            levels.iter().map(|&l| boot.interval(0, l)).collect()
        }
        CoverageMethod::PcIfePlugin => {
            let fit = pc_ife_estimate(&sim.panel, k_true, PcIfeOptions::default())?;
            levels
                .iter()
                .map(|&l| pc_ife_confidence_interval(&fit, l).map(|ci| ci[0]))
                .collect::<Result<_>>()?
        }
    };
    Ok(intervals.iter().map(|&(lo, hi)| lo <= truth && truth <= hi).collect())
}

/// Empirical coverage for several methods evaluated on the same draws.
pub fn run_coverage_studies(
    dgp: &DgpConfig,
    methods: &[CoverageMethod],
    replications: usize,
    bootstrap_replicates: usize,
    levels: &[f64],
    parallelism: usize,
) -> Result<Vec<CoverageResult>> {
    dgp.validate()?;
    if replications == 0 || levels.is_empty() {
        return Err(Error::InvalidConfig("need replications and at least one level".into()));
    }
    if methods.contains(&CoverageMethod::PifeBootstrap) && bootstrap_replicates < 19 {
        return Err(Error::InvalidConfig("bootstrap coverage needs B >= 19".into()));
    }
    let per_rep: Vec<Result<Vec<Option<Vec<bool>>>>> = with_pool(parallelism, || {
        (0..replications)
            .into_par_iter()
            .map(|r| {
                let sim = generate_replicate(dgp, r as u64)?;
                let boot_seed = derive_seed(dgp.seed, r as u64);
                Ok(methods
                    .iter()
                    .map(|&m| covers(m, &sim, dgp.k, bootstrap_replicates, levels, boot_seed).ok())
                    .collect())
            })
            .collect()
    })?;
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let ok: Vec<&Vec<bool>> = per_rep.iter().filter_map(|cells| cells[m].as_ref()).collect();
            let failures = replications - ok.len();
            CoverageResult {
                method,
                levels: levels.to_vec(),
                coverage: (0..levels.len())
                    .map(|l| ok.iter().filter(|hits| hits[l]).count() as f64 / ok.len() as f64)
                    .collect(),
                replications,
                failures,
                flagged: failures as f64 > FAILURE_FLAG_FRACTION * replications as f64,
            }
        })
        .collect())
}

pub fn run_coverage_study(
    dgp: &DgpConfig,
    method: CoverageMethod,
    replications: usize,
    bootstrap_replicates: usize,
    levels: &[f64],
    parallelism: usize,
) -> Result<CoverageResult> {
    let mut out = run_coverage_studies(dgp, &[method], replications, bootstrap_replicates, levels, parallelism)?;
    Ok(out.remove(0))
}
