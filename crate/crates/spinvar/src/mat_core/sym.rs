use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Result, SpinError};

/// Eigenvalues above `-PSD_TOL * scale` count as PSD; strict PD needs `> PSD_TOL * scale`,
/// where `scale` is the largest diagonal entry (at least one).
pub const PSD_TOL: f64 = 1e-10;
/// Absolute guard for entrywise division.
pub const DIV_TOL: f64 = 1e-14;

/// Dense real symmetric matrix. The lower triangle is always a mirror of the upper one.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { m: DMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        Self { m: DMatrix::identity(n, n) }
    }

    /// Builds from a closure evaluated on the upper triangle `i <= j` only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { m }
    }

    /// Mirrors the upper triangle of an arbitrary square matrix.
    pub fn from_upper_of(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix required");
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    /// Averages `m` with its transpose.
    pub fn symmetrized(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix required");
        Self::from_fn(m.nrows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    /// Row-major upper triangle, `n(n+1)/2` entries.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        let need = n * (n + 1) / 2;
        if upper.len() != need {
            return Err(SpinError::DimensionMismatch { expected: need, found: upper.len() });
        }
        let mut it = upper.iter();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(Self { m })
    }

    /// Full row list; the rows must describe a symmetric matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(SpinError::DimensionMismatch { expected: n, found: r.len() });
            }
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(SpinError::Invalid(format!("rows not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn diag(d: &[f64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    /// `h h^T`.
    pub fn outer(h: &[f64]) -> Self {
        Self::from_fn(h.len(), |i, j| h[i] * h[j])
    }

    pub fn filled(n: usize, v: f64) -> Self {
        Self { m: DMatrix::from_element(n, n, v) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn upper(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.m.row(i).iter().copied().collect()).collect()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.m.sum()
    }

    /// Largest absolute entry.
    pub fn norm_inf(&self) -> f64 {
        self.m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Sum of absolute entries.
    pub fn norm_l1(&self) -> f64 {
        self.m.iter().map(|v| v.abs()).sum()
    }

    pub fn max_diag(&self) -> f64 {
        self.m.diagonal().iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.m[(i, j)] == 0.0))
    }

    /// Tolerance scale used by the PSD tests.
    pub fn psd_scale(&self) -> f64 {
        self.max_diag().abs().max(1.0)
    }

    /// `tr(self * other)` without a dimension check beyond a debug assertion.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.m.dot(&other.m)
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        Self { m: &self.m * s }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &SymMatrix) {
        debug_assert_eq!(self.dim(), x.dim());
        self.m.zip_apply(&x.m, |s, v| *s += a * v);
    }

    pub fn hadamard(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim(), other.dim());
        Self { m: self.m.component_mul(&other.m) }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        Self { m: self.m.map(f) }
    }

    /// `self * b * self`, re-symmetrized.
    pub fn sandwich(&self, b: &SymMatrix) -> SymMatrix {
        Self::symmetrized(&(&self.m * &b.m * &self.m))
    }

    /// Keeps the diagonal only.
    pub fn diagonal_part(&self) -> SymMatrix {
        let n = self.dim();
        Self::from_fn(n, |i, j| if i == j { self.m[(i, j)] } else { 0.0 })
    }

    pub fn is_psd(&self) -> bool {
        spectral_floor(self) >= -PSD_TOL * self.psd_scale()
    }

    pub fn is_pd(&self) -> bool {
        spectral_floor(self) > PSD_TOL * self.psd_scale()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{:?}", self.rows())
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.m[idx]
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m + &rhs.m }
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m - &rhs.m }
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: SymMatrix) -> SymMatrix {
        SymMatrix { m: self.m + rhs.m }
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        SymMatrix { m: self.m - rhs.m }
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix { m: -&self.m }
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, s: f64) -> SymMatrix {
        self.scaled(s)
    }
}

impl AddAssign<&SymMatrix> for SymMatrix {
    fn add_assign(&mut self, rhs: &SymMatrix) {
        self.m += &rhs.m;
    }
}

impl SubAssign<&SymMatrix> for SymMatrix {
    fn sub_assign(&mut self, rhs: &SymMatrix) {
        self.m -= &rhs.m;
    }
}

fn check_dims(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(SpinError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// Frobenius inner product `tr(AB)`.
pub fn frobenius(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.dot(b))
}

/// Cholesky factor of a positive definite matrix, reused for log-determinants and inverses.
pub struct PdFactor {
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl PdFactor {
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let chol = Cholesky::new(a.m.clone()).ok_or(SpinError::NotPositiveDefinite)?;
        let floor = PSD_TOL * a.psd_scale();
        let l = chol.l_dirty();
        for i in 0..a.dim() {
            let d = l[(i, i)];
            if !(d * d > floor) || !d.is_finite() {
                return Err(SpinError::NotPositiveDefinite);
            }
        }
        Ok(Self { chol })
    }

    pub fn logdet(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> SymMatrix {
        SymMatrix::symmetrized(&self.chol.inverse())
    }
}

/// `log det A` through a Cholesky factorization.
pub fn chol_logdet(a: &SymMatrix) -> Result<f64> {
    Ok(PdFactor::new(a)?.logdet())
}

/// Inverse of a positive definite matrix, re-symmetrized.
pub fn sym_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(PdFactor::new(a)?.inverse())
}

/// Smallest eigenvalue.
pub fn spectral_floor(a: &SymMatrix) -> f64 {
    if a.dim() == 0 {
        return f64::INFINITY;
    }
    if a.dim() == 1 {
        return a.m[(0, 0)];
    }
    SymmetricEigen::new(a.m.clone()).eigenvalues.iter().fold(f64::INFINITY, |x, &v| x.min(v))
}

/// Largest eigenvalue.
pub fn spectral_ceiling(a: &SymMatrix) -> f64 {
    if a.dim() == 1 {
        return a.m[(0, 0)];
    }
    SymmetricEigen::new(a.m.clone()).eigenvalues.iter().fold(f64::NEG_INFINITY, |x, &v| x.max(v))
}

/// Entrywise quotient `A ⊘ B`.
pub fn hadamard_div(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    check_dims(a, b)?;
    let n = a.dim();
    for i in 0..n {
        for j in i..n {
            if b.m[(i, j)].abs() < DIV_TOL {
                return Err(SpinError::ZeroDivisor(i, j));
            }
        }
    }
    Ok(SymMatrix::from_fn(n, |i, j| a.m[(i, j)] / b.m[(i, j)]))
}
