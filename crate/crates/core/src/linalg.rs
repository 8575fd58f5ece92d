//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size below which a triangular pivot counts as zero.
pub const SINGULAR_TOL: f64 = 1e-10;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Eigenvectors are the columns of the returned matrix, in the same order.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Flip columns so that each column's entry of largest magnitude is positive.
pub fn normalize_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Unit eigenvector of the smallest eigenvalue of a symmetric matrix.
pub fn null_direction(gram: &DMatrix<f64>) -> Vec<f64> {
    let (_, vectors) = sym_eigen_desc(gram.clone());
    let mut v = vectors.column(gram.ncols() - 1).clone_owned();
    let pivot = v.iter().copied().fold(0.0_f64, |b, x| if x.abs() > b.abs() { x } else { b });
    if pivot < 0.0 {
        v.neg_mut();
    }
    v.iter().copied().collect()
}

/// Solve `min ||design * b - rhs||` by Householder QR.
///
/// `scales[j]` is the reference magnitude for column `j`; the design is
/// declared singular when a diagonal entry of R falls below
/// `SINGULAR_TOL * scales[j]`. Pass the column norms of the raw design when
/// `design` has been residualized, so that annihilated columns are caught.
pub fn least_squares(design: &DMatrix<f64>, rhs: &DVector<f64>, scales: &[f64]) -> Result<DVector<f64>> {
    let p = design.ncols();
    assert_eq!(scales.len(), p);
    assert_eq!(design.nrows(), rhs.len());
    if design.nrows() < p {
        return Err(Error::SingularDesign {
            direction: null_direction(&design.tr_mul(design)),
        });
    }
    let qr = design.clone().qr();
    let r = qr.r();
    for j in 0..p {
        if !(r[(j, j)].abs() > SINGULAR_TOL * scales[j]) {
            return Err(Error::SingularDesign {
                direction: null_direction(&design.tr_mul(design)),
            });
        }
    }
    let mut qtb = rhs.clone();
    qr.q_tr_mul(&mut qtb);
    let head = qtb.rows(0, p).clone_owned();
    r.solve_upper_triangular(&head).ok_or_else(|| Error::SingularDesign {
        direction: null_direction(&design.tr_mul(design)),
    })
}

/// Column-stack each N×T regressor matrix into one NT×Q design
/// (`vec` ordering: column-major, period by period).
pub fn stack_columns(regressors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let len = regressors.first().map_or(0, |m| m.len());
    DMatrix::from_fn(len, regressors.len(), |r, c| regressors[c].as_slice()[r])
}

/// Pooled least squares of `y` on the regressors, all N×T.
pub fn pooled_least_squares(regressors: &[DMatrix<f64>], y: &DMatrix<f64>, scales: &[f64]) -> Result<DVector<f64>> {
    let design = stack_columns(regressors);
    let rhs = DVector::from_column_slice(y.as_slice());
    least_squares(&design, &rhs, scales)
}

/// Householder QR with column-norm pivoting (Businger–Golub), truncated at
/// numerical rank.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Orthonormal basis of the retained columns, m×rank.
    pub q: DMatrix<f64>,
    /// Leading rank×n block of R, columns in pivoted order.
    pub r: DMatrix<f64>,
    /// `perm[j]` is the original index of pivoted column `j`.
    pub perm: Vec<usize>,
    pub rank: usize,
}

/// Factor `a P = Q R`, stopping once every remaining column has norm at most
/// `drop_tol`.
pub fn pivoted_qr(a: &DMatrix<f64>, drop_tol: f64) -> PivotedQr {
    let (m, n) = a.shape();
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut rank = 0;
    for k in 0..m.min(n) {
        let (best, best_norm) = (k..n)
            .map(|j| (j, work.view((k, j), (m - k, 1)).norm()))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if !(best_norm > drop_tol) {
            break;
        }
        work.swap_columns(k, best);
        perm.swap(k, best);

        let x = work.view((k, k), (m - k, 1)).clone_owned();
        let alpha = if x[0] >= 0.0 { -best_norm } else { best_norm };
        let mut v = DVector::from_column_slice(x.as_slice());
        v[0] -= alpha;
        let vtv = v.norm_squared();
        let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
        if beta != 0.0 {
            let mut block = work.view_mut((k, k), (m - k, n - k));
            let w = block.tr_mul(&v) * beta;
            block.ger(-1.0, &v, &w, 1.0);
        }
        for i in (k + 1)..m {
            work[(i, k)] = 0.0;
        }
        work[(k, k)] = alpha;
        reflectors.push((v, beta));
        rank += 1;
    }

    let mut q = DMatrix::zeros(m, rank);
    for j in 0..rank {
        q[(j, j)] = 1.0;
    }
    for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
        if *beta == 0.0 {
            continue;
        }
        let mut block = q.view_mut((k, 0), (m - k, rank));
        let w = block.tr_mul(v) * *beta;
        block.ger(-1.0, v, &w, 1.0);
    }
    let r = work.view((0, 0), (rank, n)).clone_owned();
    PivotedQr { q, r, perm, rank }
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Serde adapter writing a matrix as row-major nested arrays.
pub mod row_major {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

/// Serde adapter writing a vector as a flat array.
pub mod flat_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
