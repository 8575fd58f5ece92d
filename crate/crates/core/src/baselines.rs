//! Comparison estimators: pooled OLS and the iterative principal-components
//! interactive fixed effects estimator with its plug-in covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::PanelData;
use crate::error::{Error, Result};
use crate::linalg::{normalize_column_signs, pooled_least_squares, sym_eigen_desc};
use crate::stats::two_sided_z;

/// Pooled least squares of `y_it` on `X_it`, no intercept.
pub fn pooled_ols(panel: &PanelData) -> Result<DVector<f64>> {
    pooled_least_squares(panel.covariates(), panel.y(), &panel.covariate_norms())
}

/// Weighting of the loading correction in the plug-in `Z_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingCorrection {
    /// `Z_i = M_F X_i - N⁻¹ Σ_k a_ik M_F X_k`, `a_ik = λ_iᵀ(ΛᵀΛ)⁻¹λ_k`.
    #[default]
    Unnormalized,
    /// `a_ik = λ_iᵀ(ΛᵀΛ/N)⁻¹λ_k`, i.e. `Z` is `M_F X` with its projection
    /// on the loading space removed.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcIfeOptions {
    /// Stop once `‖β_new - β_old‖∞ < tol`.
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub loading_correction: LoadingCorrection,
}

impl Default for PcIfeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            loading_correction: LoadingCorrection::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcIfeFit {
    pub beta_hat: DVector<f64>,
    /// T×K with `F̂ᵀF̂/T = I`.
    pub f_hat: DMatrix<f64>,
    /// N×K.
    pub lambda_hat: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub sigma2_hat: f64,
    pub d_hat: DMatrix<f64>,
    /// `σ̂² D̂⁻¹ / (NT)`.
    pub cov_beta: DMatrix<f64>,
    /// Concentrated sum of squared residuals after each slope update.
    pub objective_trace: Vec<f64>,
}

/// `A M_F = A - (A F) Fᵀ / T` for an N×T matrix `A`.
fn annihilate_factors(a: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    if f.ncols() == 0 {
        return a.clone();
    }
    let t = f.nrows() as f64;
    a - (a * f) * f.transpose() / t
}

/// `√T` times the leading `k` eigenvectors of `WᵀW`.
fn principal_factors(w: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let t = w.ncols();
    if k == 0 {
        return DMatrix::zeros(t, 0);
    }
    let (_, vectors) = sym_eigen_desc(w.tr_mul(w));
    let mut f = vectors.columns(0, k).clone_owned() * (t as f64).sqrt();
    normalize_column_signs(&mut f);
    f
}

fn slope_given_factors(panel: &PanelData, f: &DMatrix<f64>) -> Result<DVector<f64>> {
    if f.ncols() == 0 {
        return pooled_ols(panel);
    }
    let xs: Vec<DMatrix<f64>> = panel.covariates().iter().map(|x| annihilate_factors(x, f)).collect();
    let y = annihilate_factors(panel.y(), f);
    pooled_least_squares(&xs, &y, &panel.covariate_norms())
}

/// Iterative PC-IFE with `k` known factors, started from pooled OLS.
///
/// Hitting `max_iter` is not an error; the fit comes back with
/// `converged = false`.
pub fn pc_ife_estimate(panel: &PanelData, k: usize, options: PcIfeOptions) -> Result<PcIfeFit> {
    let (n, t) = (panel.n_units(), panel.n_periods());
    if k >= n.min(t) {
        return Err(Error::InvalidFactorCount { k, limit: n.min(t) });
    }
    let mut beta = pooled_ols(panel)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let f = principal_factors(&panel.residuals(beta.as_slice()), k);
        let next = slope_given_factors(panel, &f)?;
        trace.push(annihilate_factors(&panel.residuals(next.as_slice()), &f).norm_squared());
        let step = (&next - &beta).amax();
        beta = next;
        if step < options.tol {
            converged = true;
            break;
        }
    }

    let w = panel.residuals(beta.as_slice());
    let f_hat = principal_factors(&w, k);
    let lambda_hat = &w * &f_hat / t as f64;
    let u = &w - &lambda_hat * f_hat.transpose();
    let nt = (n * t) as f64;
    let sigma2_hat = u.norm_squared() / nt;

    let d_hat = plug_in_d(panel, &f_hat, &lambda_hat, options.loading_correction);
    let cov_beta = match d_hat.clone().try_inverse() {
        Some(inv) => {
            let c = inv * (sigma2_hat / nt);
            (&c + c.transpose()) * 0.5
        }
        None => {
            return Err(Error::SingularDesign {
                direction: crate::linalg::null_direction(&d_hat),
            })
        }
    };

    Ok(PcIfeFit {
        beta_hat: beta,
        f_hat,
        lambda_hat,
        iterations,
        converged,
        sigma2_hat,
        d_hat,
        cov_beta,
        objective_trace: trace,
    })
}

/// `D̂ = (NT)⁻¹ Σ_i Z_iᵀ Z_i`.
fn plug_in_d(
    panel: &PanelData,
    f: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    correction: LoadingCorrection,
) -> DMatrix<f64> {
    let (n, t) = (panel.n_units(), panel.n_periods());
    let q = panel.n_covariates();
    let weights = if lambda.ncols() == 0 {
        None
    } else {
        (lambda.tr_mul(lambda)).try_inverse().map(|inv| lambda * inv * lambda.transpose())
    };
    let z: Vec<DMatrix<f64>> = panel
        .covariates()
        .iter()
        .map(|x| {
            let xm = annihilate_factors(x, f);
            match &weights {
                Some(a) => match correction {
                    LoadingCorrection::Unnormalized => &xm - (a * &xm) / n as f64,
                    LoadingCorrection::Normalized => &xm - a * &xm,
                },
                None => xm,
            }
        })
        .collect();
    DMatrix::from_fn(q, q, |a, b| z[a].dot(&z[b]) / (n * t) as f64)
}

/// Normal-approximation intervals `β̂_j ± z_{1-α/2} √cov_jj`.
pub fn pc_ife_confidence_interval(fit: &PcIfeFit, level: f64) -> Result<Vec<(f64, f64)>> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level {level} not in (0,1)")));
    }
    let z = two_sided_z(level);
    Ok(fit
        .beta_hat
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let half = z * fit.cov_beta[(j, j)].max(0.0).sqrt();
            (b - half, b + half)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate, DgpConfig, Scenario};

    #[test]
    fn pooled_ols_hand_value() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let y = DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 2.0, 4.0]);
        let panel = PanelData::from_matrices(y, vec![x]).unwrap();
        assert!((pooled_ols(&panel).unwrap()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_factors_is_pooled_ols() {
        let sim = generate(&DgpConfig::new(Scenario::GaussianStrong, 30, 8, 4)).unwrap();
        let fit = pc_ife_estimate(&sim.panel, 0, PcIfeOptions::default()).unwrap();
        assert_eq!(fit.beta_hat, pooled_ols(&sim.panel).unwrap());
        assert!(fit.converged);
    }

    #[test]
    fn objective_never_increases() {
        let sim = generate(&DgpConfig::new(Scenario::GaussianStrong, 40, 10, 6)).unwrap();
        let fit = pc_ife_estimate(&sim.panel, 3, PcIfeOptions::default()).unwrap();
        assert!(fit.converged);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10));
        }
        let ftf = fit.f_hat.tr_mul(&fit.f_hat) / 10.0;
        assert!((ftf - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn plug_in_intervals() {
        let sim = generate(&DgpConfig::new(Scenario::GaussianStrong, 50, 20, 2)).unwrap();
        let fit = pc_ife_estimate(&sim.panel, 3, PcIfeOptions::default()).unwrap();
        let ci90 = pc_ife_confidence_interval(&fit, 0.90).unwrap();
        let ci99 = pc_ife_confidence_interval(&fit, 0.99).unwrap();
        for j in 0..2 {
            let mid = 0.5 * (ci90[j].0 + ci90[j].1);
            assert!((mid - fit.beta_hat[j]).abs() < 1e-12);
            assert!(ci99[j].0 < ci90[j].0 && ci99[j].1 > ci90[j].1);
            let half = 0.5 * (ci90[j].1 - ci90[j].0);
            assert!((half - 1.6448536269514722 * fit.cov_beta[(j, j)].sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn loading_correction_variants() {
        let sim = generate(&DgpConfig::new(Scenario::GaussianStrong, 50, 20, 2)).unwrap();
        let plain = pc_ife_estimate(&sim.panel, 3, PcIfeOptions::default()).unwrap();
        let normalized = pc_ife_estimate(
            &sim.panel,
            3,
            PcIfeOptions {
                loading_correction: LoadingCorrection::Normalized,
                ..PcIfeOptions::default()
            },
        )
        .unwrap();
        assert_eq!(plain.beta_hat, normalized.beta_hat);
        // removing the loading-space component can only shrink D̂
        for j in 0..2 {
            assert!(normalized.d_hat[(j, j)] <= plain.d_hat[(j, j)]);
        }
        let lambda = &normalized.lambda_hat;
        let proj = lambda * (lambda.tr_mul(lambda)).try_inverse().unwrap() * lambda.transpose();
        let z: Vec<DMatrix<f64>> = sim
            .panel
            .covariates()
            .iter()
            .map(|x| {
                let xm = annihilate_factors(x, &normalized.f_hat);
                &xm - &proj * &xm
            })
            .collect();
        let d00 = z[0].norm_squared() / 1000.0;
        assert!((d00 - normalized.d_hat[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn unconverged_fit_has_no_interval() {
        let sim = generate(&DgpConfig::new(Scenario::GaussianStrong, 30, 10, 1)).unwrap();
        let options = PcIfeOptions {
            tol: 0.0,
            max_iter: 2,
            ..PcIfeOptions::default()
        };
        let fit = pc_ife_estimate(&sim.panel, 3, options).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
        assert!(matches!(pc_ife_confidence_interval(&fit, 0.9), Err(Error::NotConverged)));
    }

    #[test]
    fn too_many_factors() {
        let sim = generate(&DgpConfig::new(Scenario::GaussianStrong, 30, 5, 1)).unwrap();
        assert!(matches!(
            pc_ife_estimate(&sim.panel, 5, PcIfeOptions::default()),
            Err(Error::InvalidFactorCount { k: 5, limit: 5 })
        ));
    }
}
