//! Sieve basis construction and the cross-sectional projector onto its span.
//!
//! Each covariate's unit averages are expanded into `J` basis functions; the
//! blocks are laid out covariate by covariate, so column `q*J + l` holds
//! `φ_{l+1}` evaluated at covariate `q`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::CovariateAverages;
use crate::error::{Error, Result, Warning};
use crate::linalg::pivoted_qr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    Polynomial,
    BSpline,
}

/// Placement of interior B-spline knots on the rescaled covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotRule {
    /// Equal-mass knots at empirical quantiles of the unit averages.
    #[default]
    Quantile,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub j_per_covariate: usize,
    #[serde(default = "default_degree")]
    pub bspline_degree: usize,
    #[serde(default)]
    pub knot_rule: KnotRule,
}

fn default_degree() -> usize {
    3
}

impl BasisSpec {
    pub fn polynomial(j: usize) -> Self {
        Self {
            family: BasisFamily::Polynomial,
            j_per_covariate: j,
            bspline_degree: default_degree(),
            knot_rule: KnotRule::Quantile,
        }
    }

    pub fn bspline(j: usize, degree: usize) -> Self {
        Self {
            family: BasisFamily::BSpline,
            j_per_covariate: j,
            bspline_degree: degree,
            knot_rule: KnotRule::Quantile,
        }
    }

    pub fn with_knot_rule(mut self, rule: KnotRule) -> Self {
        self.knot_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_per_covariate == 0 {
            return Err(Error::InvalidBasis("J must be at least 1".into()));
        }
        if self.family == BasisFamily::BSpline {
            if self.bspline_degree == 0 {
                return Err(Error::InvalidBasis("B-spline degree must be at least 1".into()));
            }
            if self.j_per_covariate < self.bspline_degree + 1 {
                return Err(Error::InvalidBasis(format!(
                    "B-spline of degree {} needs J >= {}, got {}",
                    self.bspline_degree,
                    self.bspline_degree + 1,
                    self.j_per_covariate
                )));
            }
        }
        Ok(())
    }
}

/// Named rules for the sieve dimension as a function of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionRule {
    /// `max(ceil(N^{1/3} / 1.5), 2)`, used in the Monte Carlo designs.
    Sim,
    /// `floor(N^{1/3})`, used for empirical work.
    Empirical,
}

impl DimensionRule {
    pub fn dimension(self, n_units: usize) -> usize {
        let cube_root = (n_units as f64).cbrt();
        match self {
            DimensionRule::Sim => ((cube_root / 1.5).ceil() as usize).max(2),
            // cbrt(125) may land a hair under 5
            DimensionRule::Empirical => ((cube_root + 1e-9).floor() as usize).max(1),
        }
    }
}

/// `rescaled = (x - center) / half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateScaling {
    pub center: f64,
    pub half_width: f64,
}

impl CovariateScaling {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.center) / self.half_width
    }
}

/// Evaluated basis Φ(X̄) plus everything needed to evaluate φ at new points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMatrix {
    #[serde(with = "crate::linalg::row_major")]
    pub phi: DMatrix<f64>,
    pub spec: BasisSpec,
    pub scaling: Vec<CovariateScaling>,
    /// Full clamped knot vector per covariate (B-spline only).
    pub knots: Vec<Vec<f64>>,
    pub warnings: Vec<Warning>,
}

/// A basis row evaluated at an arbitrary point.
#[derive(Debug, Clone)]
pub struct BasisRow {
    pub values: DVector<f64>,
    /// Some coordinate fell outside the rescaled training range [-1, 1].
    pub out_of_range: bool,
}

impl BasisMatrix {
    pub fn n_covariates(&self) -> usize {
        self.scaling.len()
    }

    pub fn n_columns(&self) -> usize {
        self.phi.ncols()
    }

    /// `(q, l)` for every column, 0-based.
    pub fn column_layout(&self) -> Vec<(usize, usize)> {
        let j = self.spec.j_per_covariate;
        (0..self.n_covariates()).flat_map(|q| (0..j).map(move |l| (q, l))).collect()
    }

    /// φ(x) for a Q-vector `x`, using the training scaling. Points outside the
    /// training range are extrapolated with the same formulas and flagged.
    pub fn evaluate_row(&self, x: &[f64]) -> BasisRow {
        assert_eq!(x.len(), self.n_covariates(), "covariate count mismatch");
        let j = self.spec.j_per_covariate;
        let mut values = DVector::zeros(j * x.len());
        let mut out_of_range = false;
        for (q, &xq) in x.iter().enumerate() {
            let s = self.scaling[q].apply(xq);
            out_of_range |= !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&s);
            let block = self.block_values(q, s);
            values.rows_mut(q * j, j).copy_from_slice(&block);
        }
        BasisRow { values, out_of_range }
    }

    fn block_values(&self, q: usize, s: f64) -> Vec<f64> {
        let j = self.spec.j_per_covariate;
        match self.spec.family {
            BasisFamily::Polynomial => {
                let mut out = Vec::with_capacity(j);
                let mut pow = 1.0;
                for _ in 0..j {
                    pow *= s;
                    out.push(pow);
                }
                out
            }
            BasisFamily::BSpline => bspline_basis(&self.knots[q], self.spec.bspline_degree, j, s),
        }
    }
}

/// Build Φ(X̄) from per-unit covariate averages.
///
/// Polynomial blocks use `φ_l(s) = s^l`, `l = 1..J`, with `s = x / max|x|`;
/// a pure scaling leaves the span of the raw powers untouched. B-spline
/// blocks map each column affinely onto [-1, 1] and use a clamped knot
/// vector there. No intercept column is added.
pub fn build_basis(xbar: &CovariateAverages, spec: &BasisSpec) -> Result<BasisMatrix> {
    spec.validate()?;
    let (n, q_count) = xbar.xbar.shape();
    let j = spec.j_per_covariate;
    let mut warnings = Vec::new();
    if n < j {
        warnings.push(Warning::RankDeficientBasis { n_units: n, columns: j });
    }

    let mut scaling = Vec::with_capacity(q_count);
    let mut knots = Vec::new();
    for q in 0..q_count {
        let col = xbar.xbar.column(q);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !(hi - lo > 0.0) {
            return Err(Error::DegenerateCovariate { covariate: q });
        }
        let sc = match spec.family {
            BasisFamily::Polynomial => CovariateScaling {
                center: 0.0,
                half_width: lo.abs().max(hi.abs()),
            },
            BasisFamily::BSpline => CovariateScaling {
                center: 0.5 * (lo + hi),
                half_width: 0.5 * (hi - lo),
            },
        };
        if spec.family == BasisFamily::BSpline {
            let rescaled: Vec<f64> = col.iter().map(|&v| sc.apply(v).clamp(-1.0, 1.0)).collect();
            knots.push(clamped_knots(&rescaled, spec.bspline_degree, j, spec.knot_rule));
        }
        scaling.push(sc);
    }

    let mut basis = BasisMatrix {
        phi: DMatrix::zeros(n, j * q_count),
        spec: *spec,
        scaling,
        knots,
        warnings,
    };
    for i in 0..n {
        let row: Vec<f64> = xbar.xbar.row(i).iter().copied().collect();
        let values = basis.evaluate_row(&row).values;
        basis.phi.row_mut(i).copy_from(&values.transpose());
    }
    Ok(basis)
}

/// Clamped knot vector on [-1, 1] with `j - degree - 1` interior knots.
fn clamped_knots(rescaled: &[f64], degree: usize, j: usize, rule: KnotRule) -> Vec<f64> {
    let interior = j - degree - 1;
    let mut knots = vec![-1.0; degree + 1];
    match rule {
        KnotRule::Uniform => {
            knots.extend((1..=interior).map(|k| -1.0 + 2.0 * k as f64 / (interior + 1) as f64));
        }
        KnotRule::Quantile => {
            let mut sorted = rescaled.to_vec();
            sorted.sort_by(f64::total_cmp);
            let last = (sorted.len() - 1) as f64;
            knots.extend((1..=interior).map(|k| {
                let pos = last * k as f64 / (interior + 1) as f64;
                let (lo, frac) = (pos.floor() as usize, pos - pos.floor());
                let hi = (lo + 1).min(sorted.len() - 1);
                sorted[lo] + frac * (sorted[hi] - sorted[lo])
            }));
        }
    }
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    knots
}

/// All `n_basis` B-spline values at `u` (triangular Cox–de Boor scheme).
/// Outside the knot range the boundary polynomial pieces are continued.
pub(crate) fn bspline_basis(knots: &[f64], degree: usize, n_basis: usize, u: f64) -> Vec<f64> {
    let span = find_span(knots, degree, n_basis, u);
    let mut local = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    local[0] = 1.0;
    for jj in 1..=degree {
        left[jj] = u - knots[span + 1 - jj];
        right[jj] = knots[span + jj] - u;
        let mut saved = 0.0;
        for r in 0..jj {
            let temp = local[r] / (right[r + 1] + left[jj - r]);
            local[r] = saved + right[r + 1] * temp;
            saved = left[jj - r] * temp;
        }
        local[jj] = saved;
    }
    let mut out = vec![0.0; n_basis];
    for (r, v) in local.into_iter().enumerate() {
        out[span - degree + r] = v;
    }
    out
}

/// Index `s` with `knots[s] <= u < knots[s+1]`, clamped to the valid spans.
fn find_span(knots: &[f64], degree: usize, n_basis: usize, u: f64) -> usize {
    if u >= knots[n_basis] {
        // last non-empty span
        let mut s = n_basis - 1;
        while s > degree && knots[s] >= knots[n_basis] {
            s -= 1;
        }
        return s;
    }
    if u < knots[degree] {
        let mut s = degree;
        while s < n_basis - 1 && knots[s + 1] <= knots[degree] {
            s += 1;
        }
        return s;
    }
    let (mut lo, mut hi) = (degree, n_basis);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if u < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    /// Thin QR with column pivoting.
    #[default]
    Qr,
    /// Left singular vectors with non-negligible singular values.
    Pinv,
}

/// Relative drop tolerance for rank determination, against ‖Φ‖_F.
pub const RANK_TOL: f64 = 1e-10;

/// Orthogonal projector onto the column span of Φ, held as an orthonormal
/// basis `Q_r` (N×rank). `P v = Q_r (Q_rᵀ v)`; the N×N matrix is never formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    pub method: ProjectionMethod,
    pub rank: usize,
    #[serde(with = "crate::linalg::row_major")]
    span: DMatrix<f64>,
}

impl Projector {
    pub fn new(phi: &DMatrix<f64>) -> Self {
        Self::with_method(phi, ProjectionMethod::Qr)
    }

    pub fn with_method(phi: &DMatrix<f64>, method: ProjectionMethod) -> Self {
        let tol = RANK_TOL * phi.norm();
        let n = phi.nrows();
        if phi.ncols() == 0 || !(phi.norm() > 0.0) {
            return Self {
                method,
                rank: 0,
                span: DMatrix::zeros(n, 0),
            };
        }
        let span = match method {
            ProjectionMethod::Qr => pivoted_qr(phi, tol).q,
            ProjectionMethod::Pinv => {
                let svd = phi.clone().svd(true, false);
                let u = svd.u.expect("left singular vectors requested");
                let keep: Vec<usize> = (0..svd.singular_values.len())
                    .filter(|&k| svd.singular_values[k] > tol)
                    .collect();
                DMatrix::from_fn(n, keep.len(), |i, c| u[(i, keep[c])])
            }
        };
        Self {
            method,
            rank: span.ncols(),
            span,
        }
    }

    /// Orthonormal basis of the projection range, N×rank.
    pub fn span(&self) -> &DMatrix<f64> {
        &self.span
    }

    pub fn n_units(&self) -> usize {
        self.span.nrows()
    }

    /// `Q_rᵀ V`, the coordinates of `P V` in the orthonormal basis.
    pub fn coordinates(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.span.tr_mul(v)
    }

    /// `P_Φ V`, columnwise.
    pub fn project(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank == 0 {
            return DMatrix::zeros(v.nrows(), v.ncols());
        }
        &self.span * self.coordinates(v)
    }

    /// `M_Φ V = V - P_Φ V`, columnwise.
    pub fn annihilate(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        v - self.project(v)
    }
}

/// Convenience wrapper matching the basis-to-projector step.
pub fn build_projector(basis: &BasisMatrix) -> Projector {
    Projector::new(&basis.phi)
}
