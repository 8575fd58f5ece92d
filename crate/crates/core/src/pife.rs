//! Projection-based interactive fixed effects: slope estimation by
//! annihilating the sieve span in every period, then projected principal
//! components for factors, sieve coefficients and loadings.

use nalgebra::{DMatrix, DVector};

use crate::basis::{build_basis, build_projector, BasisMatrix, BasisSpec, Projector, RANK_TOL};
use crate::data::{compute_time_averages, PanelData};
use crate::error::{Error, Result, Warning};
use crate::linalg::{flat_vector, max_abs, normalize_column_signs, pooled_least_squares, row_major, sym_eigen_desc};
use serde::{Deserialize, Serialize};

/// Slope estimate together with the residual matrix and the operators used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PifeFit {
    #[serde(with = "flat_vector")]
    pub beta_hat: DVector<f64>,
    /// `Ỹ`, N×T, with columns `y_t - X_t β̂`.
    #[serde(with = "row_major")]
    pub residuals: DMatrix<f64>,
    /// `Σ_t X_tᵀ M_Φ X_t`, Q×Q.
    #[serde(with = "row_major")]
    pub gram: DMatrix<f64>,
    pub basis: BasisMatrix,
    pub projector: Projector,
    pub warnings: Vec<Warning>,
}

impl PifeFit {
    pub fn projector_rank(&self) -> usize {
        self.projector.rank
    }

    pub fn basis_spec(&self) -> &BasisSpec {
        &self.basis.spec
    }
}

/// P-IFE slope estimate with a basis built from the panel's own time averages.
pub fn estimate_beta(panel: &PanelData, spec: &BasisSpec) -> Result<PifeFit> {
    let xbar = compute_time_averages(panel);
    let basis = build_basis(&xbar, spec)?;
    let projector = build_projector(&basis);
    estimate_beta_with(panel, basis, projector)
}

/// P-IFE slope estimate for a prebuilt basis and projector.
///
/// Solves the pooled least-squares problem of `M_Φ y_t` on `M_Φ X_t` stacked
/// over periods by QR, which gives `[Σ X_tᵀ M X_t]⁻¹ Σ X_tᵀ M y_t`.
pub fn estimate_beta_with(panel: &PanelData, basis: BasisMatrix, projector: Projector) -> Result<PifeFit> {
    assert_eq!(projector.n_units(), panel.n_units(), "projector built for a different panel");
    let mut warnings = basis.warnings.clone();
    if panel.n_units() <= basis.n_columns() {
        warnings.push(Warning::FewUnits {
            n_units: panel.n_units(),
            columns: basis.n_columns(),
        });
    }
    let x_dot: Vec<DMatrix<f64>> = panel.covariates().iter().map(|x| projector.annihilate(x)).collect();
    let y_dot = projector.annihilate(panel.y());
    let beta_hat = pooled_least_squares(&x_dot, &y_dot, &panel.covariate_norms())?;
    let q = panel.n_covariates();
    let gram = DMatrix::from_fn(q, q, |a, b| x_dot[a].dot(&x_dot[b]));
    let residuals = panel.residuals(beta_hat.as_slice());
    Ok(PifeFit {
        beta_hat,
        residuals,
        gram,
        basis,
        projector,
        warnings,
    })
}

/// Factors, sieve coefficients and loading decomposition for a fixed `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFit {
    pub k: usize,
    /// `F̂`, T×K, normalized so `F̂ᵀF̂/T = I`.
    #[serde(with = "row_major")]
    pub f_hat: DMatrix<f64>,
    /// `B̂`, JQ×K.
    #[serde(with = "row_major")]
    pub b_hat: DMatrix<f64>,
    /// `Λ̂ = ỸF̂/T`, N×K.
    #[serde(with = "row_major")]
    pub lambda_hat: DMatrix<f64>,
    /// `Ĝ = P_Φ Λ̂`, N×K.
    #[serde(with = "row_major")]
    pub g_hat: DMatrix<f64>,
    /// `Γ̂ = Λ̂ - Ĝ`, N×K.
    #[serde(with = "row_major")]
    pub gamma_hat: DMatrix<f64>,
    /// Eigenvalues of `Ỹᵀ P_Φ Ỹ`, descending.
    pub eigenvalues: Vec<f64>,
    pub warnings: Vec<Warning>,
}

/// Descending eigenpairs of the T×T matrix `Ỹᵀ P_Φ Ỹ`, formed from the
/// rank×T coordinates of the projected residuals.
fn projected_eigen(fit: &PifeFit) -> (Vec<f64>, DMatrix<f64>) {
    let coords = fit.projector.coordinates(&fit.residuals);
    let (mut values, vectors) = sym_eigen_desc(coords.tr_mul(&coords));
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    (values, vectors)
}

pub fn estimate_factors(fit: &PifeFit, k: usize) -> Result<FactorFit> {
    let t = fit.residuals.ncols();
    let limit = t.min(fit.projector.rank);
    if k == 0 || k >= limit {
        return Err(Error::InvalidFactorCount { k, limit });
    }
    let (eigenvalues, vectors) = projected_eigen(fit);
    let mut warnings = Vec::new();
    if (eigenvalues[k - 1] - eigenvalues[k]).abs() <= 1e-10 * eigenvalues[0].max(f64::MIN_POSITIVE) {
        warnings.push(Warning::AmbiguousFactorSpace { k });
    }

    let t_f = t as f64;
    let mut f_hat = vectors.columns(0, k).clone_owned() * t_f.sqrt();
    normalize_column_signs(&mut f_hat);
    let lambda_hat = &fit.residuals * &f_hat / t_f;
    let g_hat = fit.projector.project(&lambda_hat);
    let gamma_hat = &lambda_hat - &g_hat;

    let phi = &fit.basis.phi;
    let eps = RANK_TOL * phi.norm();
    let b_hat = phi
        .clone()
        .svd(true, true)
        .solve(&lambda_hat, eps)
        .map_err(|e| Error::InvalidBasis(e.to_string()))?;

    Ok(FactorFit {
        k,
        f_hat,
        b_hat,
        lambda_hat,
        g_hat,
        gamma_hat,
        eigenvalues,
        warnings,
    })
}

impl FactorFit {
    /// `ĝ(x) = B̂ᵀ φ(x)`, one value per factor, plus the out-of-range flag.
    pub fn evaluate_g(&self, basis: &BasisMatrix, x: &[f64]) -> (DVector<f64>, bool) {
        let row = basis.evaluate_row(x);
        (self.b_hat.tr_mul(&row.values), row.out_of_range)
    }
}

pub fn evaluate_g(factor_fit: &FactorFit, basis: &BasisMatrix, x: &[f64]) -> (DVector<f64>, bool) {
    factor_fit.evaluate_g(basis, x)
}

/// Outcome of the eigenvalue-ratio search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCountSelection {
    pub k_hat: usize,
    /// `ratios[k-1] = λ_k / λ_{k+1}` over the searched range.
    pub ratios: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// A vanishing eigenvalue cut the search short.
    pub degenerate: bool,
}

/// `K̂ = argmax λ_k / λ_{k+1}` over `k = 1..⌈JQ/2⌉-1` for the eigenvalues of
/// `Ỹᵀ P_Φ Ỹ`.
pub fn select_num_factors(fit: &PifeFit, j: usize, q: usize) -> Result<FactorCountSelection> {
    let jq = j * q;
    if jq <= 2 {
        return Err(Error::InvalidBasis(format!("factor-count search needs J·Q > 2, got {jq}")));
    }
    let (eigenvalues, _) = projected_eigen(fit);
    let t = eigenvalues.len();
    let k_max = (jq.div_ceil(2) - 1).min(t - 1);
    let floor = 1e-12 * eigenvalues[0];

    let mut ratios = Vec::with_capacity(k_max);
    let mut degenerate = false;
    for k in 1..=k_max {
        if !(eigenvalues[k] > floor) {
            degenerate = true;
            ratios.push(f64::INFINITY);
            break;
        }
        ratios.push(eigenvalues[k - 1] / eigenvalues[k]);
    }
    let k_hat = if !(eigenvalues[0] > 0.0) {
        1
    } else {
        ratios
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &r)| if r > best.1 { (i, r) } else { best })
            .0
            + 1
    };
    Ok(FactorCountSelection {
        k_hat,
        ratios,
        eigenvalues,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingNorms {
    pub g_frob: f64,
    pub g_max: f64,
    pub gamma_frob: f64,
    pub gamma_max: f64,
}

/// Frobenius and max-abs norms of the systematic and idiosyncratic loadings.
pub fn loading_decomposition_norms(factor_fit: &FactorFit) -> LoadingNorms {
    LoadingNorms {
        g_frob: factor_fit.g_hat.norm(),
        g_max: max_abs(&factor_fit.g_hat),
        gamma_frob: factor_fit.gamma_hat.norm(),
        gamma_max: max_abs(&factor_fit.gamma_hat),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, DimensionRule};
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_panel(n: usize, t: usize, q: usize, seed: u64) -> PanelData {
        let mut rng = substream(seed, 0);
        let x: Vec<DMatrix<f64>> = (0..q)
            .map(|_| DMatrix::from_fn(n, t, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let y = DMatrix::from_fn(n, t, |_, _| rng.sample::<f64, _>(StandardNormal));
        PanelData::from_matrices(y, x).unwrap()
    }

    /// Dummy-interaction regression: y_it on X_it and Φ_i interacted with a
    /// full set of period dummies, solved densely by SVD.
    fn dummy_interaction_beta(panel: &PanelData, phi: &DMatrix<f64>) -> DVector<f64> {
        let (n, t, q) = (panel.n_units(), panel.n_periods(), panel.n_covariates());
        let m = phi.ncols();
        let mut design = DMatrix::zeros(n * t, q + t * m);
        let mut rhs = DVector::zeros(n * t);
        for s in 0..t {
            for i in 0..n {
                let row = s * n + i;
                rhs[row] = panel.y()[(i, s)];
                for a in 0..q {
                    design[(row, a)] = panel.x(a)[(i, s)];
                }
                for c in 0..m {
                    design[(row, q + s * m + c)] = phi[(i, c)];
                }
            }
        }
        let sol = design.svd(true, true).solve(&rhs, 1e-12).unwrap();
        sol.rows(0, q).into_owned()
    }

    #[test]
    fn matches_dummy_interaction_regression() {
        for seed in 0..5 {
            let panel = random_panel(12, 4, 2, seed);
            let spec = BasisSpec::polynomial(2);
            let fit = estimate_beta(&panel, &spec).unwrap();
            let oracle = dummy_interaction_beta(&panel, &fit.basis.phi);
            assert!((&fit.beta_hat - oracle).amax() < 1e-8);
        }
    }

    #[test]
    fn gram_is_annihilated_cross_product() {
        let panel = random_panel(15, 5, 2, 3);
        let fit = estimate_beta(&panel, &BasisSpec::polynomial(2)).unwrap();
        let phi = &fit.basis.phi;
        let p = phi * (phi.tr_mul(phi)).try_inverse().unwrap() * phi.transpose();
        let m = DMatrix::identity(15, 15) - p;
        let mut gram = DMatrix::zeros(2, 2);
        for s in 0..5 {
            let xt = panel.x_period(s);
            gram += xt.transpose() * &m * xt;
        }
        assert!((&fit.gram - gram).amax() < 1e-9);
    }

    #[test]
    fn exact_recovery_without_noise() {
        let mut config = crate::simulation::DgpConfig::new(crate::simulation::Scenario::GaussianStrong, 60, 20, 11);
        config.gamma_var = 0.0;
        config.error_sd = 0.0;
        let sim = crate::simulation::generate(&config).unwrap();
        let fit = estimate_beta(&sim.panel, &BasisSpec::polynomial(3)).unwrap();
        assert!((&fit.beta_hat - &sim.true_beta).amax() < 1e-8);

        let factors = estimate_factors(&fit, 3).unwrap();
        let t = 20.0;
        let est = &factors.f_hat * factors.f_hat.transpose() / t;
        let f = &sim.true_f;
        let truth = f * (f.tr_mul(f)).try_inverse().unwrap() * f.transpose();
        assert!((est - truth).norm() < 1e-6);
        assert!(factors.gamma_hat.amax() < 1e-6);
    }

    #[test]
    fn factor_fit_identities() {
        let config = crate::simulation::DgpConfig::new(crate::simulation::Scenario::GaussianStrong, 80, 15, 5);
        let sim = crate::simulation::generate(&config).unwrap();
        let j = DimensionRule::Sim.dimension(80);
        let fit = estimate_beta(&sim.panel, &BasisSpec::polynomial(j)).unwrap();
        let factors = estimate_factors(&fit, 3).unwrap();

        let ftf = factors.f_hat.tr_mul(&factors.f_hat) / 15.0;
        assert!((ftf - DMatrix::identity(3, 3)).amax() < 1e-8);
        assert!((&factors.lambda_hat - (&factors.g_hat + &factors.gamma_hat)).amax() <= 1e-12);
        for c in 0..3 {
            let col = factors.f_hat.column(c);
            let top = col.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(top > 0.0);
        }
        for w in factors.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }

        // in-sample evaluation of the sieve reproduces Ĝ
        let xbar = compute_time_averages(&sim.panel).xbar;
        for i in [0, 17, 79] {
            let (g, outside) = factors.evaluate_g(&fit.basis, &[xbar[(i, 0)], xbar[(i, 1)]]);
            assert!(!outside);
            for k in 0..3 {
                assert!((g[k] - factors.g_hat[(i, k)]).abs() < 1e-8 * (1.0 + factors.g_hat.amax()));
            }
        }
    }

    #[test]
    fn factor_count_bounds() {
        let panel = random_panel(20, 6, 2, 1);
        let fit = estimate_beta(&panel, &BasisSpec::polynomial(2)).unwrap();
        assert!(matches!(estimate_factors(&fit, 0), Err(Error::InvalidFactorCount { .. })));
        assert!(matches!(estimate_factors(&fit, 4), Err(Error::InvalidFactorCount { k: 4, limit: 4 })));
        assert!(estimate_factors(&fit, 3).is_ok());
    }

    #[test]
    fn single_factor_selected() {
        let (n, t) = (40, 12);
        let mut rng = substream(9, 0);
        let xbar_src = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let f: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<DMatrix<f64>> = (0..2)
            .map(|q| {
                let mut m = DMatrix::from_fn(n, t, |_, _| rng.sample::<f64, _>(StandardNormal));
                for i in 0..n {
                    let mean = m.row(i).mean();
                    for s in 0..t {
                        m[(i, s)] += xbar_src[(i, q)] - mean;
                    }
                }
                m
            })
            .collect();
        let y = DMatrix::from_fn(n, t, |i, s| {
            let lambda = xbar_src[(i, 0)] - 2.0 * xbar_src[(i, 1)] + xbar_src[(i, 0)].powi(2);
            x[0][(i, s)] - x[1][(i, s)] + lambda * f[s]
        });
        let panel = PanelData::from_matrices(y, x).unwrap();
        let fit = estimate_beta(&panel, &BasisSpec::polynomial(3)).unwrap();
        let sel = select_num_factors(&fit, 3, 2).unwrap();
        assert_eq!(sel.k_hat, 1);
        assert!(sel.degenerate);
        assert!(sel.ratios[0].is_infinite());
    }

    #[test]
    fn fits_round_trip_through_json() {
        let panel = random_panel(12, 5, 2, 4);
        let fit = estimate_beta(&panel, &BasisSpec::bspline(4, 2)).unwrap();
        let factors = estimate_factors(&fit, 2).unwrap();
        let text = serde_json::to_string(&fit).unwrap();
        assert_eq!(serde_json::from_str::<PifeFit>(&text).unwrap(), fit);
        let text = serde_json::to_string(&factors).unwrap();
        assert_eq!(serde_json::from_str::<FactorFit>(&text).unwrap(), factors);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["f_hat"].as_array().unwrap().len(), 5);
        assert_eq!(value["f_hat"][1][0].as_f64().unwrap(), factors.f_hat[(1, 0)]);
    }

    #[test]
    fn loading_norms_by_hand() {
        let panel = random_panel(10, 5, 1, 2);
        let fit = estimate_beta(&panel, &BasisSpec::polynomial(2)).unwrap();
        let mut factors = estimate_factors(&fit, 1).unwrap();
        factors.g_hat = DMatrix::from_column_slice(2, 1, &[3.0, -4.0]);
        factors.gamma_hat = DMatrix::zeros(2, 1);
        let norms = loading_decomposition_norms(&factors);
        assert_eq!(norms.g_frob, 5.0);
        assert_eq!(norms.g_max, 4.0);
        assert_eq!(norms.gamma_frob, 0.0);
        assert_eq!(norms.gamma_max, 0.0);
    }

    #[test]
    fn invariant_to_reparametrized_basis() {
        let panel = random_panel(25, 4, 2, 8);
        let fit = estimate_beta(&panel, &BasisSpec::polynomial(2)).unwrap();
        let mut basis = build_basis(&compute_time_averages(&panel), &BasisSpec::polynomial(2)).unwrap();
        let mix = DMatrix::from_fn(4, 4, |a, b| if a == b { 2.0 } else { 0.3 * (a + 2 * b) as f64 });
        basis.phi = &basis.phi * mix;
        let projector = Projector::new(&basis.phi);
        let other = estimate_beta_with(&panel, basis, projector).unwrap();
        assert!((&fit.beta_hat - &other.beta_hat).amax() < 1e-9);
    }
}
