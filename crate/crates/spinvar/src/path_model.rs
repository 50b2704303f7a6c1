//! Discrete order parameters: weights `x₀ … x_{r−1}`, the monotone chain `Q₀ = 0 ≤ Q₁ ≤ … ≤ Q_r = Q`,
//! and the derived multiplier and `D` sequences.

use crate::error::{Result, SpinError};
use crate::mat_core::{spectral_floor, MixtureSpec, SymMatrix, PSD_TOL};

/// Weights and levels of a discrete path. `levels[k]` is `Q_k` for `k = 0..=r`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    x: Vec<f64>,
    levels: Vec<SymMatrix>,
}

/// One violated invariant reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum PathViolation {
    FirstWeightNonzero(f64),
    WeightOutOfRange { k: usize, value: f64 },
    WeightDecrease { k: usize, margin: f64 },
    IncrementNotPsd { k: usize, margin: f64 },
    LastWeightNotOne(f64),
    NonFinite { k: usize },
}

impl DiscretePath {
    /// `x` has length `r`; `free` holds `Q₁ … Q_{r−1}`; the constraint is `Q_r`.
    pub fn new(x: Vec<f64>, free: Vec<SymMatrix>, constraint: &SymMatrix) -> Result<Self> {
        let r = x.len();
        if r == 0 {
            return Err(SpinError::Invalid("at least one weight required".into()));
        }
        if free.len() + 1 != r {
            return Err(SpinError::DimensionMismatch { expected: r - 1, found: free.len() });
        }
        let n = constraint.dim();
        if let Some(q) = free.iter().find(|q| q.dim() != n) {
            return Err(SpinError::DimensionMismatch { expected: n, found: q.dim() });
        }
        let mut levels = Vec::with_capacity(r + 1);
        levels.push(SymMatrix::zeros(n));
        levels.extend(free);
        levels.push(constraint.clone());
        Ok(Self { x, levels })
    }

    /// Levels `Q_k = (k/r)·Q` for the given weights.
    pub fn equal_spaced(x: Vec<f64>, constraint: &SymMatrix) -> Self {
        let r = x.len();
        let free = (1..r).map(|k| constraint.scaled(k as f64 / r as f64)).collect();
        Self::new(x, free, constraint).expect("consistent sizes")
    }

    pub fn r(&self) -> usize {
        self.x.len()
    }

    pub fn n(&self) -> usize {
        self.levels[0].dim()
    }

    /// All weights `x₀ … x_{r−1}`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.x[k]
    }

    /// `Q_k` for `0 ≤ k ≤ r`.
    pub fn q(&self, k: usize) -> &SymMatrix {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[SymMatrix] {
        &self.levels
    }

    /// Free levels `Q₁ … Q_{r−1}`.
    pub fn free(&self) -> &[SymMatrix] {
        &self.levels[1..self.r()]
    }

    pub fn constraint(&self) -> &SymMatrix {
        &self.levels[self.r()]
    }

    /// `Q_{k+1} − Q_k` for `0 ≤ k ≤ r−1`.
    pub fn increment(&self, k: usize) -> SymMatrix {
        &self.levels[k + 1] - &self.levels[k]
    }

    /// Same weights and constraint with new free levels.
    pub fn with_free(&self, free: Vec<SymMatrix>) -> Result<Self> {
        Self::new(self.x.clone(), free, self.constraint())
    }

    pub fn with_weights(&self, x: Vec<f64>) -> Result<Self> {
        Self::new(x, self.free().to_vec(), self.constraint())
    }

    pub fn is_last_weight_one(&self) -> bool {
        self.x[self.r() - 1] == 1.0
    }

    /// True when `x₀ < x₁ < … < x_{r−1}`.
    pub fn strictly_increasing(&self) -> bool {
        self.x.windows(2).all(|w| w[0] < w[1])
    }

    /// Smallest eigenvalue over all increments.
    pub fn min_increment_eig(&self) -> f64 {
        (0..self.r()).map(|k| spectral_floor(&self.increment(k))).fold(f64::INFINITY, f64::min)
    }

    /// Inserts a copy of level `k` (weight and matrix), `1 ≤ k ≤ r−1`.
    pub fn duplicate_level(&self, k: usize) -> Self {
        assert!(k >= 1 && k < self.r(), "only free levels can be duplicated");
        let mut x = self.x.clone();
        x.insert(k, self.x[k]);
        let mut levels = self.levels.clone();
        levels.insert(k, self.levels[k].clone());
        Self { x, levels }
    }
}

/// Lists every violated invariant.
pub fn validate(path: &DiscretePath, require_last_one: bool) -> Vec<PathViolation> {
    let mut out = Vec::new();
    let x = path.x();
    if x[0] != 0.0 {
        out.push(PathViolation::FirstWeightNonzero(x[0]));
    }
    for (k, &v) in x.iter().enumerate() {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            out.push(PathViolation::WeightOutOfRange { k, value: v });
        }
    }
    for k in 1..x.len() {
        if x[k] < x[k - 1] {
            out.push(PathViolation::WeightDecrease { k, margin: x[k] - x[k - 1] });
        }
    }
    if require_last_one && x[x.len() - 1] != 1.0 {
        out.push(PathViolation::LastWeightNotOne(x[x.len() - 1]));
    }
    for k in 0..=path.r() {
        if !path.q(k).is_finite() {
            out.push(PathViolation::NonFinite { k });
        }
    }
    for k in 0..path.r() {
        let inc = path.increment(k);
        let floor = spectral_floor(&inc);
        let scale = path.q(k + 1).psd_scale();
        if floor < -PSD_TOL * scale {
            out.push(PathViolation::IncrementNotPsd { k, margin: floor });
        }
    }
    out
}

/// Multiplier `Λ` with `Λ_p = Λ − Σ_{p≤k≤r−1} x_k (ξ'(Q_{k+1}) − ξ'(Q_k))`; `seq[p-1]` is `Λ_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierState {
    pub lambda: SymMatrix,
    pub seq: Vec<SymMatrix>,
}

impl MultiplierState {
    /// `Λ_p` for `1 ≤ p ≤ r`.
    pub fn level(&self, p: usize) -> &SymMatrix {
        &self.seq[p - 1]
    }
}

/// Builds `Λ₁ … Λ_r`; fails when `Λ₁` is not positive definite.
pub fn lambda_sequence(lambda: &SymMatrix, path: &DiscretePath, mix: &MixtureSpec) -> Result<MultiplierState> {
    let state = lambda_sequence_unchecked(lambda, path, mix);
    let first = &state.seq[0];
    let floor = spectral_floor(first);
    if !(floor > PSD_TOL * first.psd_scale()) {
        return Err(SpinError::InfeasibleMultiplier { min_eig: floor });
    }
    Ok(state)
}

/// [`lambda_sequence`] without the feasibility check.
pub fn lambda_sequence_unchecked(lambda: &SymMatrix, path: &DiscretePath, mix: &MixtureSpec) -> MultiplierState {
    let r = path.r();
    let xp: Vec<SymMatrix> = path.levels().iter().map(|q| mix.xi_prime(q)).collect();
    let mut seq = vec![lambda.clone(); r];
    for p in (1..r).rev() {
        let mut next = seq[p].clone();
        next.axpy(-path.weight(p), &(&xp[p + 1] - &xp[p]));
        seq[p - 1] = next;
    }
    MultiplierState { lambda: lambda.clone(), seq }
}

/// `D_p = Σ_{p≤k≤r−1} x_k (Q_{k+1} − Q_k)`; `seq[p-1]` is `D_p` for `1 ≤ p ≤ r−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DSequence {
    pub seq: Vec<SymMatrix>,
}

impl DSequence {
    pub fn level(&self, p: usize) -> &SymMatrix {
        &self.seq[p - 1]
    }
}

/// Builds `D₁ … D_{r−1}`; fails when `D_{r−1}` is not positive definite.
pub fn d_sequence(path: &DiscretePath) -> Result<DSequence> {
    let r = path.r();
    if r < 2 {
        return Err(SpinError::Invalid("the D sequence needs r >= 2".into()));
    }
    let d = d_sequence_unchecked(path);
    let last = &d.seq[r - 2];
    let floor = spectral_floor(last);
    if !(floor > PSD_TOL * path.constraint().psd_scale()) {
        return Err(SpinError::InfeasiblePath { reason: format!("D_(r-1) has smallest eigenvalue {floor:.3e}") });
    }
    Ok(d)
}

pub fn d_sequence_unchecked(path: &DiscretePath) -> DSequence {
    let r = path.r();
    let n = path.n();
    let mut seq = vec![SymMatrix::zeros(n); r.saturating_sub(1)];
    let mut acc = SymMatrix::zeros(n);
    for p in (1..r).rev() {
        acc.axpy(path.weight(p), &path.increment(p));
        seq[p - 1] = acc.clone();
    }
    DSequence { seq }
}
