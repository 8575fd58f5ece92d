use nalgebra::DMatrix;
use proptest::prelude::*;

use panel_ife::basis::{BasisSpec, ProjectionMethod, Projector};
use panel_ife::bootstrap::{bootstrap_panel, BootstrapConfig};
use panel_ife::data::PanelData;
use panel_ife::pife::{estimate_beta, estimate_factors, select_num_factors};
use panel_ife::stats::order_statistic_quantile;

const TOL: f64 = 1e-8;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

/// N×T panel with two covariates that vary over time.
fn panel(n: usize, t: usize) -> impl Strategy<Value = PanelData> {
    (matrix(n, t), matrix(n, t), matrix(n, t)).prop_map(|(y, x1, x2)| PanelData::from_matrices(y, vec![x1, x2]).unwrap())
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / (1.0 + y.abs())).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_is_symmetric_idempotent_and_fixes_its_range(phi in matrix(12, 4), dup in 0usize..4) {
        // repeat a column to exercise the rank drop
        let mut cols: Vec<_> = phi.column_iter().map(|c| c.into_owned()).collect();
        cols.push(cols[dup].clone() * 2.0);
        let phi = DMatrix::from_columns(&cols);
        for method in [ProjectionMethod::Qr, ProjectionMethod::Pinv] {
            let proj = Projector::with_method(&phi, method);
            prop_assert_eq!(proj.rank, 4);
            let p = proj.project(&DMatrix::identity(12, 12));
            prop_assert!((&p - p.transpose()).amax() <= TOL);
            prop_assert!((&p * &p - &p).amax() <= TOL);
            prop_assert!(proj.annihilate(&phi).amax() <= TOL * phi.amax());
            let span = proj.span();
            prop_assert!((span.tr_mul(span) - DMatrix::identity(4, 4)).amax() <= TOL);
        }
    }

    #[test]
    fn qr_and_svd_projectors_agree(phi in matrix(10, 3), v in matrix(10, 2)) {
        let qr = Projector::with_method(&phi, ProjectionMethod::Qr).project(&v);
        let svd = Projector::with_method(&phi, ProjectionMethod::Pinv).project(&v);
        prop_assert!((qr - svd).amax() <= TOL * (1.0 + v.amax()));
    }

    #[test]
    fn slope_shifts_with_outcome(p in panel(30, 5), shift in prop::array::uniform2(-5.0..5.0f64)) {
        let spec = BasisSpec::polynomial(2);
        let base = estimate_beta(&p, &spec).unwrap();
        let y = p.y() + p.x(0) * shift[0] + p.x(1) * shift[1];
        let moved = PanelData::from_matrices(y, p.covariates().to_vec()).unwrap();
        let fit = estimate_beta(&moved, &spec).unwrap();
        let expected: Vec<f64> = base.beta_hat.iter().zip(shift).map(|(b, s)| b + s).collect();
        prop_assert!(rel_gap(fit.beta_hat.as_slice(), &expected) <= TOL);
    }

    #[test]
    fn slope_ignores_loadings_in_sieve_span(p in panel(30, 5), a in matrix(4, 2), f in matrix(5, 2)) {
        let spec = BasisSpec::polynomial(2);
        let base = estimate_beta(&p, &spec).unwrap();
        let y = p.y() + &base.basis.phi * a * f.transpose();
        let moved = PanelData::from_matrices(y, p.covariates().to_vec()).unwrap();
        let fit = estimate_beta(&moved, &spec).unwrap();
        prop_assert!(rel_gap(fit.beta_hat.as_slice(), base.beta_hat.as_slice()) <= 1e-7);
    }

    #[test]
    fn slope_scales_with_outcome(p in panel(25, 4), c in 0.1..10.0f64) {
        let spec = BasisSpec::polynomial(2);
        let base = estimate_beta(&p, &spec).unwrap();
        let scaled = PanelData::from_matrices(p.y() * c, p.covariates().to_vec()).unwrap();
        let fit = estimate_beta(&scaled, &spec).unwrap();
        let expected: Vec<f64> = base.beta_hat.iter().map(|b| b * c).collect();
        prop_assert!(rel_gap(fit.beta_hat.as_slice(), &expected) <= TOL);
    }

    #[test]
    fn factors_are_orthonormal_and_count_in_range(p in panel(30, 8), k in 1usize..4) {
        let spec = BasisSpec::polynomial(3);
        let fit = estimate_beta(&p, &spec).unwrap();
        let factors = estimate_factors(&fit, k).unwrap();
        let t = p.n_periods() as f64;
        let gram = factors.f_hat.tr_mul(&factors.f_hat) / t;
        prop_assert!((gram - DMatrix::identity(k, k)).amax() <= TOL);
        prop_assert!((&factors.g_hat + &factors.gamma_hat - &factors.lambda_hat).amax() <= 1e-12);
        let sel = select_num_factors(&fit, 3, 2).unwrap();
        prop_assert!(sel.k_hat >= 1 && sel.k_hat <= 2);
        prop_assert!(sel.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn bootstrap_intervals_are_symmetric(p in panel(20, 4), seed in any::<u64>(), level in 0.5..0.99f64) {
        let fit = estimate_beta(&p, &BasisSpec::polynomial(2)).unwrap();
        let boot = bootstrap_panel(&p, &fit.projector, &BootstrapConfig::new(39, level, seed)).unwrap();
        for j in 0..2 {
            let q = boot.quantiles[j];
            prop_assert!(q >= 0.0);
            prop_assert_eq!(boot.intervals[j], (boot.beta_hat[j] - q, boot.beta_hat[j] + q));
            prop_assert!(boot.quantile(j, level.min(0.9)) <= boot.quantile(j, 0.99));
        }
    }

    #[test]
    fn order_statistic_is_a_sample_value(values in prop::collection::vec(-1e3..1e3f64, 1..200), level in 0.0..1.0f64) {
        let q = order_statistic_quantile(&values, level);
        prop_assert!(values.contains(&q));
        let below = values.iter().filter(|&&v| v <= q).count();
        prop_assert!(below as f64 >= level * values.len() as f64 - 1e-9);
    }
}
