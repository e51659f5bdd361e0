//! Brute-force oracles, independent of the library's numerics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use siws_core::DenseMatrix;

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Characteristic polynomial `det(λI − A)` by Faddeev–LeVerrier, as
/// coefficients `[1, c_1, ..., c_n]` of `λ^n + c_1 λ^{n−1} + ... + c_n`.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c_prev;
        let c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of a monic polynomial by Durand–Kerner, then Newton polishing.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let bound = 1.0 + coeffs[1..].iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * bound).collect();
    for _ in 0..2000 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let (p, _) = horner(coeffs, roots[i]);
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                continue;
            }
            let delta = p / denom;
            roots[i] -= delta;
            change = change.max(delta.norm());
        }
        if change < 1e-15 * bound {
            break;
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..5 {
            let (p, dp) = horner(coeffs, *r);
            if dp.norm() == 0.0 {
                break;
            }
            *r -= p / dp;
        }
    }
    roots
}

pub fn rho_oracle(m: &DenseMatrix) -> f64 {
    poly_roots(&char_poly(&to_na(m)))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `sqrt(λ_max(MᵀM))` from the roots of the Gram matrix's polynomial.
pub fn norm2_oracle(m: &DenseMatrix) -> f64 {
    let a = to_na(m);
    let gram = a.transpose() * &a;
    poly_roots(&char_poly(&gram))
        .iter()
        .map(|z| z.re)
        .fold(0.0, f64::max)
        .sqrt()
}

/// `Σ_k (Mᵀ)^k M^k` summed term by term.
pub fn lyapunov_oracle(m: &DenseMatrix) -> DMatrix<f64> {
    let a = to_na(m);
    let n = a.nrows();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut q = DMatrix::<f64>::zeros(n, n);
    for _ in 0..1_000_000 {
        let term = power.transpose() * &power;
        q += &term;
        if term.norm() <= 1e-18 * q.norm() {
            break;
        }
        power = &power * &a;
    }
    q
}

/// Largest eigenvalue of the symmetric part of `s`.
pub fn sym_lambda_max(s: &DMatrix<f64>) -> f64 {
    let sym = (s + s.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral radius of an arbitrary square matrix via nalgebra.
pub fn rho_na(m: &DenseMatrix) -> f64 {
    to_na(m)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}
