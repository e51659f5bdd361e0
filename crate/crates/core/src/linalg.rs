//! Dense real linear algebra for desk-scale matrices.
//!
//! Everything here is deterministic: power iterations start from a fixed
//! vector and are accelerated by repeated squaring, so the number of
//! floating-point operations depends only on the input.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::LinalgError;
use crate::num;

/// Default relative tolerance for eigen-iterations.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Upper bound on repeated squarings; 2^64 power-iteration steps.
const MAX_SQUARINGS: usize = 64;

/// Relative symmetry slack accepted by [`symmetric_eigen_extrema`].
pub const SYMMETRY_SLACK: f64 = 1e-12;

/// Row-major dense real matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: (rows.len(), cols),
                    found: (rows.len(), row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product; panics on a dimension mismatch (see [`Self::try_mul`]).
    pub fn mul(&self, other: &Self) -> Self {
        self.try_mul(other).expect("matrix product dimension mismatch")
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: (self.cols, other.cols),
                found: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let other_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * v`; panics if `v.len() != cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵀ · self · v` for a square matrix.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Entrywise maximum of two equally shaped matrices.
    pub fn max_entrywise(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s·I` for a square matrix.
    pub fn shift_diagonal(&self, s: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += s;
        }
        m
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, &v| acc.max(num::abs(v)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        num::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| num::abs(*v)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |a_ij − a_ji|`; zero for a symmetric matrix.
    pub fn asymmetry(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                dev = dev.max(num::abs(self[(i, j)] - self[(j, i)]));
            }
        }
        dev
    }

    /// `(S + Sᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = avg;
                s[(j, i)] = avg;
            }
        }
        s
    }

    pub fn principal_submatrix(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        let mut m = Self::zeros(k, k);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                m[(a, b)] = self[(i, j)];
            }
        }
        m
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let mut b = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                b[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        b
    }

    fn require_square(&self) -> Result<(), LinalgError> {
        if self.is_square() {
            Ok(())
        } else {
            Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    fn require_nonnegative(&self) -> Result<(), LinalgError> {
        match self.data.iter().position(|&v| v < 0.0) {
            None => Ok(()),
            Some(pos) => Err(LinalgError::NegativeEntry {
                row: pos / self.cols,
                col: pos % self.cols,
                value: self.data[pos],
            }),
        }
    }

    /// Divides by the largest absolute entry; returns the divisor.
    fn normalize_max(&mut self) -> f64 {
        let s = self.max_abs();
        if s > 0.0 {
            let inv = 1.0 / s;
            self.data.iter_mut().for_each(|v| *v *= inv);
        }
        s
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Serialized as an array of rows, the layout used by config files.
impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for i in 0..self.rows {
            seq.serialize_element(self.row(i))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        DenseMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

fn check_tol(tol: f64) -> Result<(), LinalgError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(LinalgError::BadTolerance(tol))
    }
}

/// Boolean support pattern of a square matrix; edge `i → j` iff entry `(i, j)` is set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Support {
    n: usize,
    bits: Vec<bool>,
}

impl Support {
    pub fn new(n: usize, bits: Vec<bool>) -> Result<Self, LinalgError> {
        if bits.len() != n * n {
            return Err(LinalgError::DimensionMismatch {
                expected: (n, n),
                found: (bits.len(), 1),
            });
        }
        Ok(Self { n, bits })
    }

    /// Strictly positive entries of `m`.
    pub fn of_positive(m: &DenseMatrix) -> Result<Self, LinalgError> {
        m.require_square()?;
        Ok(Self {
            n: m.rows(),
            bits: m.as_slice().iter().map(|&v| v > 0.0).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }
}

/// Strongly connected components of the support graph, in reverse
/// topological order of the condensation (sink components first).
/// Indices inside each component are ascending.
pub fn scc_condensation(support: &Support) -> Vec<Vec<usize>> {
    // Iterative Tarjan; neighbours and roots are visited in index order.
    const UNVISITED: usize = usize::MAX;
    let n = support.len();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next_index = 0usize;
    let mut components = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            let mut descended = false;
            while *next < n {
                let w = *next;
                *next += 1;
                if !support.get(v, w) {
                    continue;
                }
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                    descended = true;
                    break;
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            }
            if descended {
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components
}

/// True when the support graph of `m` is strongly connected.
pub fn is_irreducible(m: &DenseMatrix) -> Result<bool, LinalgError> {
    let support = Support::of_positive(m)?;
    Ok(!support.is_empty() && scc_condensation(&support).len() == 1)
}

/// Perron root and positive right Perron vector (max-normalized) of an
/// irreducible nonnegative matrix.
///
/// Iterates `(B + I)^(2^j) · 1` by repeated squaring and stops once the
/// Collatz–Wielandt bracket `min_i (Bv)_i / v_i ≤ ρ(B) ≤ max_i (Bv)_i / v_i`
/// is narrower than `tol` relative to its upper end.
fn perron_irreducible(b: &DenseMatrix, tol: f64) -> Result<(f64, Vec<f64>), LinalgError> {
    let n = b.rows();
    if n == 1 {
        return Ok((b[(0, 0)], vec![1.0]));
    }
    let mut power = b.shift_diagonal(1.0);
    power.normalize_max();
    let ones = vec![1.0; n];
    let mut estimate = 0.0;
    let mut residual = f64::INFINITY;
    let mut v = ones.clone();
    for squarings in 0..=MAX_SQUARINGS {
        v = power.mul_vec(&ones);
        let vmax = v.iter().fold(0.0f64, |a, &x| a.max(x));
        if vmax > 0.0 {
            v.iter_mut().for_each(|x| *x /= vmax);
        }
        if v.iter().all(|&x| x > 0.0 && x.is_finite()) {
            let bv = b.mul_vec(&v);
            let (lo, hi) = bv
                .iter()
                .zip(&v)
                .map(|(a, x)| a / x)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
            estimate = 0.5 * (lo + hi);
            residual = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
            if hi - lo <= tol * hi {
                return Ok((estimate, v));
            }
        }
        if squarings == MAX_SQUARINGS {
            break;
        }
        power = power.mul(&power);
        power.normalize_max();
    }
    Err(LinalgError::NotConverged {
        iterations: MAX_SQUARINGS,
        estimate,
        residual,
        last_iterate: v,
    })
}

/// Spectral radius of a square nonnegative matrix.
///
/// The support graph is split into strongly connected components; each
/// irreducible diagonal block contributes its Perron root and 1×1 blocks
/// contribute their diagonal entry.
pub fn spectral_radius_nonneg(m: &DenseMatrix, tol: f64) -> Result<f64, LinalgError> {
    check_tol(tol)?;
    m.require_square()?;
    m.require_nonnegative()?;
    let support = Support::of_positive(m)?;
    let mut rho: f64 = 0.0;
    for comp in scc_condensation(&support) {
        let r = if comp.len() == 1 {
            m[(comp[0], comp[0])]
        } else {
            perron_irreducible(&m.principal_submatrix(&comp), tol)?.0
        };
        rho = rho.max(r);
    }
    Ok(rho)
}

/// Right and left Perron vectors of a nonnegative square matrix, each
/// normalized to unit maximum. Reducible matrices are perturbed by `eps·J`
/// (all-ones) so that both vectors are strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PerronPair {
    pub root: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    pub perturbed: bool,
}

pub fn perron_vectors(m: &DenseMatrix, eps: f64, tol: f64) -> Result<PerronPair, LinalgError> {
    check_tol(tol)?;
    m.require_square()?;
    m.require_nonnegative()?;
    let irreducible = is_irreducible(m)?;
    let base = if irreducible {
        m.clone()
    } else {
        let mut p = m.clone();
        p.data.iter_mut().for_each(|v| *v += eps);
        p
    };
    let (root, right) = perron_irreducible(&base, tol)?;
    let (_, left) = perron_irreducible(&base.transpose(), tol)?;
    Ok(PerronPair {
        root,
        right,
        left,
        perturbed: !irreducible,
    })
}

/// Deterministic start vector: all-ones with a small irregular tilt so that
/// it is not orthogonal to eigenvectors of signed matrices.
fn start_vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + 0.25 * libm::sin(1.0 + 2.0 * i as f64)).collect()
}

fn normalize2(v: &mut [f64]) -> f64 {
    let norm = num::sqrt(v.iter().map(|x| x * x).sum());
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Largest eigenvalue of a symmetric positive-semidefinite matrix. The
/// residual is judged relative to `max(θ, max|s_ij|, floor)`; callers that
/// built `s` by a shift pass the shift as `floor`.
fn psd_dominant(s: &DenseMatrix, tol: f64, floor: f64) -> Result<f64, LinalgError> {
    let n = s.rows();
    let scale = s.max_abs();
    if n == 0 || scale == 0.0 {
        return Ok(0.0);
    }
    let mut power = s.clone();
    power.normalize_max();
    let start = start_vector(n);
    let mut theta = 0.0;
    let mut residual = f64::INFINITY;
    let mut v = start.clone();
    for squarings in 0..=MAX_SQUARINGS {
        v = power.mul_vec(&start);
        if normalize2(&mut v) > 0.0 && v.iter().all(|x| x.is_finite()) {
            let sv = s.mul_vec(&v);
            theta = sv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            residual = num::sqrt(sv.iter().zip(&v).map(|(a, b)| (a - theta * b) * (a - theta * b)).sum());
            if residual <= tol * theta.max(scale).max(floor) {
                return Ok(theta);
            }
        }
        if squarings == MAX_SQUARINGS {
            break;
        }
        power = power.mul(&power);
        power.normalize_max();
    }
    Err(LinalgError::NotConverged {
        iterations: MAX_SQUARINGS,
        estimate: theta,
        residual,
        last_iterate: v,
    })
}

/// Induced 2-norm `sqrt(λ_max(MᵀM))`.
pub fn induced2_norm(m: &DenseMatrix, tol: f64) -> Result<f64, LinalgError> {
    check_tol(tol)?;
    let gram = m.transpose().mul(m).symmetrized();
    Ok(num::sqrt(psd_dominant(&gram, tol, 0.0)?.max(0.0)))
}

/// Extreme eigenvalues `(λ_min, λ_max)` of `(S + Sᵀ)/2`.
///
/// `S` must be symmetric up to `SYMMETRY_SLACK · ‖S‖_F`. Both extremes come
/// from power iteration on the positive-semidefinite shifts `S + cI` and
/// `cI − S`, with `c` the maximum absolute row sum.
pub fn symmetric_eigen_extrema(s: &DenseMatrix, tol: f64) -> Result<(f64, f64), LinalgError> {
    check_tol(tol)?;
    s.require_square()?;
    let slack = SYMMETRY_SLACK * s.frobenius_norm();
    let deviation = s.asymmetry();
    if deviation > slack {
        return Err(LinalgError::Asymmetric { deviation, slack });
    }
    let sym = s.symmetrized();
    let c = sym.inf_norm();
    if c == 0.0 {
        return Ok((0.0, 0.0));
    }
    let upper = psd_dominant(&sym.shift_diagonal(c), tol, c)? - c;
    let lower = c - psd_dominant(&sym.scale(-1.0).shift_diagonal(c), tol, c)?;
    Ok((lower, upper))
}

/// Solution of `MᵀQM − Q = −I` as the truncated series
/// `Q = I + Σ_{j≥1} (Mᵀ)^j M^j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSolution {
    pub q: DenseMatrix,
    /// Number of series terms summed (including the identity).
    pub terms: u64,
    /// `‖MᵀQM − Q + I‖_F` evaluated on the returned `Q`.
    pub residual: f64,
    /// Frobenius bound on the neglected tail of the series.
    pub tail_bound: f64,
}

/// Sums the series in doubling order: `Q ← Q + AᵀQA`, `A ← A²` starting from
/// `Q = I`, `A = M`, so after `j` rounds `Q` holds the first `2^j` terms.
pub fn solve_discrete_lyapunov(m: &DenseMatrix, tol: f64) -> Result<LyapunovSolution, LinalgError> {
    check_tol(tol)?;
    m.require_square()?;
    let n = m.rows();
    let mut q = DenseMatrix::identity(n);
    let mut a = m.clone();
    let mut terms: u64 = 1;
    for squarings in 0..MAX_SQUARINGS {
        let a_norm = a.frobenius_norm();
        if !a_norm.is_finite() || a_norm > 1e150 {
            return Err(LinalgError::LyapunovDivergent {
                squarings,
                norm: a_norm,
            });
        }
        if a_norm == 0.0 {
            break;
        }
        let term = a.transpose().mul(&q).mul(&a);
        q = q.add(&term)?;
        terms = terms.saturating_mul(2);
        a = a.mul(&a);
        let next_norm = a.frobenius_norm();
        if term.frobenius_norm() <= tol * q.frobenius_norm() && next_norm < 1.0 {
            let contraction = next_norm * next_norm;
            let tail_bound = contraction * q.frobenius_norm() / (1.0 - contraction);
            let residual = lyapunov_residual(m, &q);
            return Ok(LyapunovSolution {
                q: q.symmetrized(),
                terms,
                residual,
                tail_bound,
            });
        }
    }
    let a_norm = a.frobenius_norm();
    if a_norm == 0.0 {
        let residual = lyapunov_residual(m, &q);
        return Ok(LyapunovSolution {
            q: q.symmetrized(),
            terms,
            residual,
            tail_bound: 0.0,
        });
    }
    Err(LinalgError::LyapunovDivergent {
        squarings: MAX_SQUARINGS,
        norm: a_norm,
    })
}

/// `‖MᵀQM − Q + I‖_F`.
pub fn lyapunov_residual(m: &DenseMatrix, q: &DenseMatrix) -> f64 {
    let lhs = m.transpose().mul(q).mul(m);
    let mut r = lhs.sub(q).expect("lyapunov residual shapes");
    for i in 0..r.rows() {
        r[(i, i)] += 1.0;
    }
    r.frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DenseMatrix {
        DenseMatrix::from_rows(&[[a, b], [c, d]]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn spectral_radius_examples() {
        for n in 1..6 {
            let r = spectral_radius_nonneg(&DenseMatrix::identity(n), DEFAULT_TOL).unwrap();
            assert!(close(r, 1.0, 1e-12));
        }
        let r = spectral_radius_nonneg(&m2(0.6, 0.2, 0.3, 0.5), DEFAULT_TOL).unwrap();
        assert!(close(r, 0.8, 1e-10), "{r}");

        let nil = DenseMatrix::from_rows(&[[0.0, 1.0, 2.0], [0.0, 0.0, 3.0], [0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(spectral_radius_nonneg(&nil, DEFAULT_TOL).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_rejects_negative_entry() {
        let err = spectral_radius_nonneg(&m2(0.1, -0.2, 0.0, 0.3), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, LinalgError::NegativeEntry { row: 0, col: 1, .. }));
        assert!(matches!(
            spectral_radius_nonneg(&DenseMatrix::zeros(2, 3), DEFAULT_TOL),
            Err(LinalgError::NotSquare { .. })
        ));
        assert!(matches!(
            spectral_radius_nonneg(&DenseMatrix::identity(2), 0.0),
            Err(LinalgError::BadTolerance(_))
        ));
    }

    #[test]
    fn spectral_radius_periodic_block() {
        // A 3-cycle has eigenvalues on the unit circle; the +I shift makes
        // the iteration primitive.
        let c = DenseMatrix::from_rows(&[[0.0, 2.0, 0.0], [0.0, 0.0, 2.0], [2.0, 0.0, 0.0]]).unwrap();
        let r = spectral_radius_nonneg(&c, DEFAULT_TOL).unwrap();
        assert!(close(r, 2.0, 1e-10), "{r}");
    }

    #[test]
    fn spectral_radius_near_identity() {
        // I + h·K with h = 1e-3: slow for plain power iteration.
        let h = 1e-3;
        let m =
            DenseMatrix::from_rows(&[[1.0 - 2.0 * h, h, 0.0], [h, 1.0 - 2.0 * h, h], [0.0, h, 1.0 - 2.0 * h]]).unwrap();
        let expected = 1.0 - 2.0 * h + h * 2f64.sqrt();
        let r = spectral_radius_nonneg(&m, DEFAULT_TOL).unwrap();
        assert!(close(r, expected, 1e-10), "{r} vs {expected}");
    }

    #[test]
    fn induced_norm_examples() {
        let d = DenseMatrix::from_diagonal(&[2.0, -3.0]);
        assert!(close(induced2_norm(&d, DEFAULT_TOL).unwrap(), 3.0, 1e-10));
        assert_eq!(induced2_norm(&DenseMatrix::zeros(3, 3), DEFAULT_TOL).unwrap(), 0.0);

        // Closed form for the 2x2 symmetric Gram matrix [[0.45, 0.27], [0.27, 0.29]].
        let (a, b, c) = (0.45f64, 0.27f64, 0.29f64);
        let lmax = 0.5 * (a + c + ((a - c) * (a - c) + 4.0 * b * b).sqrt());
        let got = induced2_norm(&m2(0.6, 0.2, 0.3, 0.5), DEFAULT_TOL).unwrap();
        assert!(close(got, lmax.sqrt(), 1e-10), "{got}");
    }

    #[test]
    fn induced_norm_of_signed_matrix_orthogonal_to_ones() {
        // Top singular vector (1, −1)/√2 is orthogonal to the all-ones vector.
        let m = m2(1.0, -1.0, -1.0, 1.0);
        assert!(close(induced2_norm(&m, DEFAULT_TOL).unwrap(), 2.0, 1e-10));
    }

    #[test]
    fn symmetric_extrema_examples() {
        let (lo, hi) = symmetric_eigen_extrema(&DenseMatrix::from_diagonal(&[1.0, 4.0, 9.0]), DEFAULT_TOL).unwrap();
        assert!(close(lo, 1.0, 1e-9) && close(hi, 9.0, 1e-9), "{lo} {hi}");
        let (lo, hi) = symmetric_eigen_extrema(&m2(2.0, 1.0, 1.0, 2.0), DEFAULT_TOL).unwrap();
        assert!(close(lo, 1.0, 1e-9) && close(hi, 3.0, 1e-9), "{lo} {hi}");
        let zero = DenseMatrix::identity(3).sub(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(symmetric_eigen_extrema(&zero, DEFAULT_TOL).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn symmetric_extrema_of_negative_identity_with_rounding() {
        let (lo, hi) = symmetric_eigen_extrema(&m2(-1.0, 0.0, 1.1e-16, -1.0), DEFAULT_TOL).unwrap();
        assert!((lo + 1.0).abs() < 1e-12 && (hi + 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_extrema_rejects_asymmetric() {
        let err = symmetric_eigen_extrema(&m2(1.0, 0.5, 0.0, 1.0), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, LinalgError::Asymmetric { .. }));
        // Rounding-level asymmetry is accepted.
        assert!(symmetric_eigen_extrema(&m2(1.0, 0.5, 0.5 + 1e-17, 1.0), DEFAULT_TOL).is_ok());
    }

    #[test]
    fn lyapunov_examples() {
        let sol = solve_discrete_lyapunov(&DenseMatrix::zeros(3, 3), 1e-14).unwrap();
        assert_eq!(sol.q, DenseMatrix::identity(3));

        let half = DenseMatrix::identity(2).scale(0.5);
        let sol = solve_discrete_lyapunov(&half, 1e-14).unwrap();
        for i in 0..2 {
            assert!(close(sol.q[(i, i)], 4.0 / 3.0, 1e-12));
        }
        assert_eq!(sol.q[(0, 1)], 0.0);
        assert!(sol.residual < 1e-12);

        let m = m2(0.6, 0.2, 0.3, 0.5);
        let sol = solve_discrete_lyapunov(&m, 1e-14).unwrap();
        assert!(lyapunov_residual(&m, &sol.q) < 1e-10);
    }

    #[test]
    fn lyapunov_divergence_detected() {
        for m in [
            DenseMatrix::identity(2),
            DenseMatrix::identity(2).scale(1.01),
            m2(0.0, 2.0, 0.5, 0.0),
        ] {
            assert!(matches!(
                solve_discrete_lyapunov(&m, 1e-12),
                Err(LinalgError::LyapunovDivergent { .. })
            ));
        }
    }

    #[test]
    fn scc_examples() {
        let full = Support::new(3, vec![true; 9]).unwrap();
        assert_eq!(scc_condensation(&full), vec![vec![0, 1, 2]]);

        let n = 4;
        let upper: Vec<bool> = (0..n * n).map(|k| k / n < k % n).collect();
        let comps = scc_condensation(&Support::new(n, upper).unwrap());
        assert_eq!(comps, vec![vec![3], vec![2], vec![1], vec![0]]);

        // 0 <-> 1 and 2 <-> 3
        let mut bits = vec![false; 16];
        for (i, j) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            bits[i * 4 + j] = true;
        }
        assert_eq!(
            scc_condensation(&Support::new(4, bits).unwrap()),
            vec![vec![0, 1], vec![2, 3]]
        );
    }

    #[test]
    fn scc_reverse_topological_order() {
        // {0,1} -> {2} -> {3,4}: sinks come first.
        let mut bits = vec![false; 25];
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 3), (3, 4), (4, 3)] {
            bits[i * 5 + j] = true;
        }
        let comps = scc_condensation(&Support::new(5, bits).unwrap());
        assert_eq!(comps, vec![vec![3, 4], vec![2], vec![0, 1]]);
    }

    #[test]
    fn perron_vectors_of_reducible_matrix_are_positive() {
        let m = m2(0.5, 0.0, 0.2, 0.3);
        let pair = perron_vectors(&m, 1e-9, DEFAULT_TOL).unwrap();
        assert!(pair.perturbed);
        assert!(pair.right.iter().chain(&pair.left).all(|&v| v > 0.0));
        assert!(close(pair.root, 0.5, 1e-6));
    }

    #[test]
    fn matrix_serializes_as_rows() {
        let m = m2(1.0, 2.0, 3.0, 4.0);
        assert_eq!(m.to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(DenseMatrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
