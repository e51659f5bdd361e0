use nalgebra::DMatrix;
use proptest::prelude::*;
use siws_core::linalg::{
    induced2_norm, solve_discrete_lyapunov, spectral_radius_nonneg, symmetric_eigen_extrema, DEFAULT_TOL,
};
use siws_core::stability::kappa_bound;
use siws_core::DenseMatrix;

fn nonneg(max_n: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], n * n)
            .prop_map(move |data| DenseMatrix::new(n, n, data).unwrap())
    })
}

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn rho_na(m: &DenseMatrix) -> f64 {
    to_na(m)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn radius_is_homogeneous(m in nonneg(6), c in 0.1..10.0f64) {
        let a = spectral_radius_nonneg(&m, DEFAULT_TOL).unwrap();
        let b = spectral_radius_nonneg(&m.scale(c), DEFAULT_TOL).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-8 * (c * a).max(1e-12));
    }

    #[test]
    fn radius_is_monotone(m in nonneg(6), bump in 0.0..1.0f64) {
        let bigger = m.shift_diagonal(bump);
        let (a, b) = (
            spectral_radius_nonneg(&m, DEFAULT_TOL).unwrap(),
            spectral_radius_nonneg(&bigger, DEFAULT_TOL).unwrap(),
        );
        prop_assert!(b >= a - 1e-9 * a.max(1.0));
    }

    #[test]
    fn radius_matches_dense_eigensolver(m in nonneg(6)) {
        let a = spectral_radius_nonneg(&m, DEFAULT_TOL).unwrap();
        let b = rho_na(&m);
        // Defective eigenvalues move by up to (ε‖M‖)^(1/n) in the reference.
        let defect = 10.0 * (f64::EPSILON * m.frobenius_norm()).powf(1.0 / m.rows() as f64);
        prop_assert!((a - b).abs() <= 1e-8 * b + defect, "{a} vs {b}");
    }

    #[test]
    fn norm_dominates_radius(m in nonneg(6)) {
        let rho = spectral_radius_nonneg(&m, DEFAULT_TOL).unwrap();
        let norm = induced2_norm(&m, DEFAULT_TOL).unwrap();
        prop_assert!(norm >= rho - 1e-9 * rho.max(1.0));
        let svd = to_na(&m).singular_values().max();
        prop_assert!((norm - svd).abs() <= 1e-8 * svd.max(1e-12));
    }

    #[test]
    fn lyapunov_solution_is_symmetric_and_dominates_identity(m in nonneg(5), target in 0.05..0.95f64) {
        let rho = spectral_radius_nonneg(&m, DEFAULT_TOL).unwrap();
        prop_assume!(rho > 0.0);
        let stable = m.scale(target / rho);
        let sol = solve_discrete_lyapunov(&stable, DEFAULT_TOL).unwrap();
        prop_assert_eq!(sol.q.asymmetry(), 0.0);
        let (lo, _) = symmetric_eigen_extrema(&sol.q, DEFAULT_TOL).unwrap();
        prop_assert!(lo >= 1.0 - 1e-9);
        prop_assert!(sol.residual <= 1e-8 * sol.q.frobenius_norm());
    }

    #[test]
    fn kappa_budget_shrinks_with_harder_constants(a in 0.0..0.9f64, l in 0.5..3.0f64, dim in 1usize..20, sigma in 0.1..0.9f64) {
        let base = kappa_bound(a, l, dim, sigma).unwrap();
        let slower = kappa_bound(a + 0.05, l, dim, sigma).unwrap();
        let larger = kappa_bound(a, l + 0.5, dim, sigma).unwrap();
        let wider = kappa_bound(a, l, dim + 1, sigma).unwrap();
        prop_assert!(slower.ln_kappa_star < base.ln_kappa_star);
        prop_assert!(larger.ln_kappa_star < base.ln_kappa_star);
        prop_assert!(wider.ln_kappa_star < base.ln_kappa_star);
    }
}
