//! Dense square matrices, M-matrix certification and the `A = D - B`
//! decomposition.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, MMatrixViolation, Result};

/// Tolerance accepted on inverse nonnegativity when certifying.
pub const CERT_EPS: f64 = 1e-10;

const POWER_ITER_CAP: usize = 100_000;
const POWER_ITER_RTOL: f64 = 1e-12;

/// Dense `n x n` real matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos / n, pos % n));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(n, data)
    }

    /// The `0 x 0` matrix. Only produced by row expansion with a zero index;
    /// its determinant and alpha-permanent are both 1.
    pub fn empty() -> Self {
        Self {
            n: 0,
            data: Vec::new(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `D * self` where `D = diag(d)`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        Self::from_fn(self.n, |i, j| d[i] * self[(i, j)])
    }

    /// `self * D` where `D = diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        Self::from_fn(self.n, |i, j| self[(i, j)] * d[j])
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Determinant by LU factorisation with partial pivoting.
    pub fn determinant(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap();
            let p = a[pivot * n + col];
            if p == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            det *= p;
            for r in col + 1..n {
                let factor = a[r * n + col] / p;
                if factor != 0.0 {
                    for j in col + 1..n {
                        a[r * n + j] -= factor * a[col * n + j];
                    }
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let scale = self.max_abs();
        if scale == 0.0 {
            return Err(Error::SingularMatrix);
        }
        let mut a = self.data.clone();
        let mut inv = Self::identity(n).data;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap();
            let p = a[pivot * n + col];
            if p.abs() <= 1e-14 * scale {
                return Err(Error::SingularMatrix);
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                    inv.swap(col * n + j, pivot * n + j);
                }
            }
            for j in 0..n {
                a[col * n + j] /= p;
                inv[col * n + j] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a[r * n + col];
                if factor != 0.0 {
                    for j in 0..n {
                        a[r * n + j] -= factor * a[col * n + j];
                        inv[r * n + j] -= factor * inv[col * n + j];
                    }
                }
            }
        }
        Ok(Self { n, data: inv })
    }

    /// Lower-triangular Cholesky factor `L` with `L L^T = self`.
    pub fn cholesky(&self) -> Result<Self> {
        if !self.is_symmetric(1e-12 * self.max_abs().max(1.0)) {
            return Err(Error::NotSymmetric);
        }
        let n = self.n;
        let mut l = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(l)
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

pub fn determinant(m: &SquareMatrix) -> f64 {
    m.determinant()
}

pub fn inverse(m: &SquareMatrix) -> Result<SquareMatrix> {
    m.inverse()
}

/// Evidence that a matrix is a nonsingular M-matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MMatrixCertificate {
    pub offdiag_max: f64,
    pub inverse_min: f64,
    pub det: f64,
    #[serde(skip)]
    pub inverse: SquareMatrix,
}

pub fn certify_m_matrix(a: &SquareMatrix) -> Result<MMatrixCertificate> {
    let n = a.n();
    let mut offdiag_max = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if a[(i, j)] > 0.0 {
                    return Err(Error::NotMMatrix(MMatrixViolation::OffDiagPositive(i, j)));
                }
                offdiag_max = offdiag_max.max(a[(i, j)]);
            }
        }
    }
    if n == 1 {
        // no off-diagonal entries
        offdiag_max = 0.0;
    }
    let det = a.determinant();
    let inverse = match a.inverse() {
        Ok(inv) if det != 0.0 => inv,
        _ => return Err(Error::NotMMatrix(MMatrixViolation::Singular)),
    };
    let mut inverse_min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let v = inverse[(i, j)];
            if v < -CERT_EPS {
                return Err(Error::NotMMatrix(MMatrixViolation::InverseNegative(i, j)));
            }
            inverse_min = inverse_min.min(v);
        }
    }
    Ok(MMatrixCertificate {
        offdiag_max,
        inverse_min,
        det,
        inverse,
    })
}

/// `A = D_A - B` and the normalised form `Abar = I - Bbar`, `Bbar = D_A^{-1} B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub d: Vec<f64>,
    pub b: SquareMatrix,
    pub bbar: SquareMatrix,
    pub abar: SquareMatrix,
    pub rho: f64,
}

pub fn decompose(a: &SquareMatrix) -> Result<Decomposition> {
    certify_m_matrix(a)?;
    let n = a.n();
    let d = a.diagonal();
    if let Some(i) = d.iter().position(|&x| x <= 0.0) {
        return Err(Error::NonPositiveDiagonal(i));
    }
    let b = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { -a[(i, j)] });
    let bbar = SquareMatrix::from_fn(n, |i, j| b[(i, j)] / d[i]);
    let abar = SquareMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 } - bbar[(i, j)]);
    let rho = spectral_radius(&bbar)?;
    Ok(Decomposition {
        d,
        b,
        bbar,
        abar,
        rho,
    })
}

/// Perron root of a nonnegative matrix.
///
/// Power iteration runs on `M + I`, whose Perron root is strictly dominant
/// even when `M` is periodic. Collatz-Wielandt bounds give the stopping
/// rule; components that have decayed to nothing are dropped from the bounds.
pub fn spectral_radius(m: &SquareMatrix) -> Result<f64> {
    let n = m.n();
    if m.data.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidArgument(
            "spectral_radius expects a nonnegative matrix".into(),
        ));
    }
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut restarted = false;
    let mut iter = 0;
    while iter < POWER_ITER_CAP {
        iter += 1;
        let mut y = m.matvec(&x);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += xi;
        }
        let xmax = x.iter().cloned().fold(0.0, f64::max);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (yi, xi) in y.iter().zip(&x) {
            if *xi > 1e-13 * xmax {
                let r = yi / xi;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        if hi - lo <= POWER_ITER_RTOL * hi {
            return Ok((0.5 * (lo + hi) - 1.0).max(0.0));
        }
        let norm: f64 = y.iter().sum();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NoConvergence(iter));
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if !restarted && iter == POWER_ITER_CAP / 10 {
            // Re-seed with a strictly positive perturbation of the iterate in
            // case the start vector sat in an invariant subspace.
            restarted = true;
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += (1.0 + i as f64) / (n * n) as f64;
            }
        }
    }
    Err(Error::NoConvergence(POWER_ITER_CAP))
}

/// Random nonsingular M-matrix `A = D - B` with `D` uniform in `[1, 3]` and
/// every row of `D^{-1} B` summing to at most `rho_target`.
///
/// Row sums are drawn uniformly from `[rho_target / 2, rho_target]`, so
/// `D^{-1} A` is strictly diagonally dominant and the Perron root of
/// `D^{-1} B` is at most `rho_target`.
pub fn random_m_matrix<R: Rng + ?Sized>(n: usize, rho_target: f64, rng: &mut R) -> SquareMatrix {
    assert!(n >= 1, "dimension must be positive");
    assert!(
        rho_target > 0.0 && rho_target < 1.0,
        "rho_target must lie in (0, 1)"
    );
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=3.0)).collect();
    let mut a = SquareMatrix::from_diagonal(&d);
    if n == 1 {
        return a;
    }
    for i in 0..n {
        let raw: Vec<f64> = (0..n)
            .map(|j| if i == j { 0.0 } else { rng.random::<f64>() + 1e-3 })
            .collect();
        let total: f64 = raw.iter().sum();
        let row_sum = rho_target * rng.random_range(0.5..=1.0);
        for j in 0..n {
            if i != j {
                a[(i, j)] = -d[i] * row_sum * raw[j] / total;
            }
        }
    }
    a
}
