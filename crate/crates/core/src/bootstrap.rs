//! Cross-sectional bootstrap for the P-IFE slope.
//!
//! The panel is residualized against the sieve span once; whole units (all
//! their periods) are then resampled with replacement and the slope is
//! re-estimated on each resample. Intervals are symmetric,
//! `β̂_j ± q_j`, with `q_j` the upper order statistic of `|β̂*_j - β̂_j|`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Projector;
use crate::data::PanelData;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::stats::order_statistic_quantile;

/// Replicates allowed to fail before the run is abandoned, as a fraction of
/// all attempted draws.
pub const MAX_SINGULAR_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_replicates: usize,
    /// Confidence level `1 - α`.
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub linear_combinations: Vec<Vec<f64>>,
}

impl BootstrapConfig {
    pub fn new(n_replicates: usize, level: f64, seed: u64) -> Self {
        Self {
            n_replicates,
            level,
            seed,
            linear_combinations: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::InvalidConfig("bootstrap needs at least one replicate".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("confidence level {} not in (0,1)", self.level)));
        }
        Ok(())
    }
}

/// `ẏ_t = M_Φ y_t` and `Ẋ_t = M_Φ X_t` for every period, N×T each.
#[derive(Debug, Clone)]
pub struct Residualized {
    pub y_dot: DMatrix<f64>,
    pub x_dot: Vec<DMatrix<f64>>,
}

impl Residualized {
    pub fn n_units(&self) -> usize {
        self.y_dot.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.x_dot.len()
    }
}

pub fn residualize_panel(panel: &PanelData, projector: &Projector) -> Residualized {
    Residualized {
        y_dot: projector.annihilate(panel.y()),
        x_dot: panel.covariates().iter().map(|x| projector.annihilate(x)).collect(),
    }
}

/// Per-unit normal-equation pieces `Σ_t ẋ_it ẋ_itᵀ` and `Σ_t ẋ_it ẏ_it`.
struct UnitMoments {
    gram: Vec<DMatrix<f64>>,
    cross: Vec<DVector<f64>>,
}

impl UnitMoments {
    fn new(data: &Residualized) -> Self {
        let q = data.n_covariates();
        let n = data.n_units();
        let mut gram = Vec::with_capacity(n);
        let mut cross = Vec::with_capacity(n);
        for i in 0..n {
            gram.push(DMatrix::from_fn(q, q, |a, b| data.x_dot[a].row(i).dot(&data.x_dot[b].row(i))));
            cross.push(DVector::from_fn(q, |a, _| data.x_dot[a].row(i).dot(&data.y_dot.row(i))));
        }
        Self { gram, cross }
    }

    fn solve<I: Iterator<Item = usize>>(&self, units: I) -> Option<DVector<f64>> {
        let q = self.cross[0].len();
        let mut gram = DMatrix::zeros(q, q);
        let mut cross = DVector::zeros(q);
        for i in units {
            gram += &self.gram[i];
            cross += &self.cross[i];
        }
        let scale = gram.trace();
        if !(scale > 0.0) {
            return None;
        }
        let chol = gram.cholesky()?;
        let l = chol.l_dirty();
        let min_pivot = (0..q).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
        if min_pivot <= 1e-12 * scale {
            return None;
        }
        Some(chol.solve(&cross))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub beta_hat: Vec<f64>,
    /// Row `b` holds `β̂*_b`.
    pub replicates: Vec<Vec<f64>>,
    pub level: f64,
    /// `q_{α,j}` per coefficient.
    pub quantiles: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub linear_combinations: Vec<Vec<f64>>,
    /// `q_{α,v}` per requested combination.
    pub combo_quantiles: Vec<f64>,
    pub combo_intervals: Vec<(f64, f64)>,
    /// Draws rejected for a singular design and redrawn.
    pub singular_redraws: usize,
}

impl BootstrapResult {
    /// `q_{α,j}` at another level from the same replicates.
    pub fn quantile(&self, j: usize, level: f64) -> f64 {
        let dev: Vec<f64> = self.replicates.iter().map(|r| (r[j] - self.beta_hat[j]).abs()).collect();
        order_statistic_quantile(&dev, level)
    }

    pub fn interval(&self, j: usize, level: f64) -> (f64, f64) {
        let q = self.quantile(j, level);
        (self.beta_hat[j] - q, self.beta_hat[j] + q)
    }

    /// `q_{α,v}` for the combination `v`.
    pub fn combo_quantile(&self, v: &[f64], level: f64) -> f64 {
        let dev: Vec<f64> = self
            .replicates
            .iter()
            .map(|r| r.iter().zip(&self.beta_hat).zip(v).map(|((a, b), w)| w * (a - b)).sum::<f64>().abs())
            .collect();
        order_statistic_quantile(&dev, level)
    }
}

/// Draw `n` unit indices uniformly with replacement.
pub fn draw_units<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Cross-sectional bootstrap on residualized data.
///
/// Replicate `b` draws from substream `(seed, b)`; a draw with singular
/// design is discarded and redrawn from the same stream. Replicates are
/// computed in parallel and the result does not depend on scheduling.
pub fn bootstrap_beta(data: &Residualized, config: &BootstrapConfig) -> Result<BootstrapResult> {
    config.validate()?;
    let q = data.n_covariates();
    for v in &config.linear_combinations {
        if v.len() != q {
            return Err(Error::InvalidConfig(format!("combination has length {}, expected {q}", v.len())));
        }
    }
    let n = data.n_units();
    let moments = UnitMoments::new(data);
    let beta_hat = moments.solve(0..n).ok_or_else(|| {
        let gram: DMatrix<f64> = moments.gram.iter().fold(DMatrix::zeros(q, q), |acc, g| acc + g);
        Error::SingularDesign {
            direction: crate::linalg::null_direction(&gram),
        }
    })?;

    // cap redraws per replicate so a hopeless design cannot spin forever
    let max_attempts = 1 + (config.n_replicates as f64 * MAX_SINGULAR_FRACTION).ceil() as usize + 10;
    let draws: Vec<(Option<DVector<f64>>, usize)> = (0..config.n_replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(config.seed, b as u64);
            let mut failures = 0;
            for _ in 0..max_attempts {
                let units = draw_units(&mut rng, n);
                match moments.solve(units.into_iter()) {
                    Some(beta) => return (Some(beta), failures),
                    None => failures += 1,
                }
            }
            (None, failures)
        })
        .collect();

    let failed: usize = draws.iter().map(|d| d.1).sum();
    let attempted = config.n_replicates + failed;
    if draws.iter().any(|d| d.0.is_none()) || failed as f64 > MAX_SINGULAR_FRACTION * attempted as f64 {
        return Err(Error::TooManySingularDraws { failed, attempted });
    }

    let replicates: Vec<Vec<f64>> = draws.into_iter().map(|d| d.0.unwrap().iter().copied().collect()).collect();
    let mut result = BootstrapResult {
        beta_hat: beta_hat.iter().copied().collect(),
        replicates,
        level: config.level,
        quantiles: Vec::new(),
        intervals: Vec::new(),
        linear_combinations: config.linear_combinations.clone(),
        combo_quantiles: Vec::new(),
        combo_intervals: Vec::new(),
        singular_redraws: failed,
    };
    result.quantiles = (0..q).map(|j| result.quantile(j, config.level)).collect();
    result.intervals = (0..q)
        .map(|j| (result.beta_hat[j] - result.quantiles[j], result.beta_hat[j] + result.quantiles[j]))
        .collect();
    for v in &config.linear_combinations {
        let qv = result.combo_quantile(v, config.level);
        let centre: f64 = v.iter().zip(&result.beta_hat).map(|(a, b)| a * b).sum();
        result.combo_quantiles.push(qv);
        result.combo_intervals.push((centre - qv, centre + qv));
    }
    Ok(result)
}

/// Residualize with the fit's projector and bootstrap in one call.
pub fn bootstrap_panel(panel: &PanelData, projector: &Projector, config: &BootstrapConfig) -> Result<BootstrapResult> {
    bootstrap_beta(&residualize_panel(panel, projector), config)
}
