use crate::error::{Result, SpinError};
use crate::mat_core::sym::SymMatrix;

/// One `p`-spin term with per-species inverse temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTerm {
    pub p: u32,
    pub beta: Vec<f64>,
}

/// Which entrywise series to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureKind {
    Xi,
    XiPrime,
    XiSecond,
    Theta,
}

/// Finite list of even-`p` terms plus the external field.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    n: usize,
    terms: Vec<MixtureTerm>,
    field: Vec<f64>,
    outer: Vec<SymMatrix>,
}

impl MixtureSpec {
    pub fn new(n: usize, terms: Vec<MixtureTerm>, field: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(SpinError::Invalid("species count must be positive".into()));
        }
        if field.len() != n {
            return Err(SpinError::DimensionMismatch { expected: n, found: field.len() });
        }
        if field.iter().any(|v| !v.is_finite()) {
            return Err(SpinError::Invalid("field entries must be finite".into()));
        }
        for t in &terms {
            if t.p < 2 || t.p % 2 != 0 {
                return Err(SpinError::Invalid(format!("even p required, got {}", t.p)));
            }
            if t.beta.len() != n {
                return Err(SpinError::DimensionMismatch { expected: n, found: t.beta.len() });
            }
            if t.beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(SpinError::Invalid("beta entries must be finite and nonnegative".into()));
            }
        }
        let outer = terms.iter().map(|t| SymMatrix::outer(&t.beta)).collect();
        Ok(Self { n, terms, field, outer })
    }

    /// Pure `p = 2` mixture with zero field.
    pub fn pure2(beta: &[f64]) -> Self {
        Self::new(beta.len(), vec![MixtureTerm { p: 2, beta: beta.to_vec() }], vec![0.0; beta.len()])
            .expect("valid pure mixture")
    }

    pub fn with_field(mut self, h: &[f64]) -> Result<Self> {
        if h.len() != self.n {
            return Err(SpinError::DimensionMismatch { expected: self.n, found: h.len() });
        }
        self.field = h.to_vec();
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[MixtureTerm] {
        &self.terms
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }

    /// `h h^T`.
    pub fn field_outer(&self) -> SymMatrix {
        SymMatrix::outer(&self.field)
    }

    /// Entrywise `β₂`, or `None` when no `p = 2` term is present.
    pub fn beta2(&self) -> Option<&[f64]> {
        self.terms.iter().find(|t| t.p == 2).map(|t| t.beta.as_slice())
    }

    /// True when `ξ''` has no zero entry, i.e. every `β₂` entry is positive.
    pub fn has_positive_beta2(&self) -> bool {
        self.beta2().is_some_and(|b| b.iter().all(|v| *v > 0.0))
    }

    /// Adds `delta` to every `β₂` entry, creating the term if absent.
    pub fn with_beta2_shift(&self, delta: f64) -> Self {
        let mut terms = self.terms.clone();
        match terms.iter_mut().find(|t| t.p == 2) {
            Some(t) => t.beta.iter_mut().for_each(|b| *b += delta),
            None => terms.push(MixtureTerm { p: 2, beta: vec![delta; self.n] }),
        }
        Self::new(self.n, terms, self.field.clone()).expect("shift keeps the mixture valid")
    }

    /// `Σ_p ‖βₚ¹⊗βₚ¹ − βₚ²⊗βₚ²‖₁`, matching terms by `p`.
    pub fn temperature_distance(&self, other: &MixtureSpec) -> f64 {
        let mut ps: Vec<u32> = self.terms.iter().chain(other.terms.iter()).map(|t| t.p).collect();
        ps.sort_unstable();
        ps.dedup();
        let outer_for = |m: &MixtureSpec, p: u32| {
            m.terms
                .iter()
                .filter(|t| t.p == p)
                .fold(SymMatrix::zeros(m.n), |acc, t| acc + SymMatrix::outer(&t.beta))
        };
        ps.into_iter().map(|p| (&outer_for(self, p) - &outer_for(other, p)).norm_l1()).sum()
    }

    pub fn apply(&self, kind: MixtureKind, a: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(a.dim(), self.n);
        let n = self.n;
        let mut out = SymMatrix::zeros(n);
        for (t, bb) in self.terms.iter().zip(&self.outer) {
            let p = t.p as i32;
            let (c, shift) = match kind {
                MixtureKind::Xi => (1.0, 0),
                MixtureKind::XiPrime => (p as f64, 1),
                MixtureKind::XiSecond => ((p * (p - 1)) as f64, 2),
                MixtureKind::Theta => ((p - 1) as f64, 0),
            };
            let e = p - shift;
            let term = SymMatrix::from_fn(n, |i, j| c * bb[(i, j)] * a[(i, j)].powi(e));
            out += &term;
        }
        out
    }

    pub fn xi(&self, a: &SymMatrix) -> SymMatrix {
        self.apply(MixtureKind::Xi, a)
    }

    pub fn xi_prime(&self, a: &SymMatrix) -> SymMatrix {
        self.apply(MixtureKind::XiPrime, a)
    }

    pub fn xi_second(&self, a: &SymMatrix) -> SymMatrix {
        self.apply(MixtureKind::XiSecond, a)
    }

    pub fn theta(&self, a: &SymMatrix) -> SymMatrix {
        self.apply(MixtureKind::Theta, a)
    }
}

/// Free-function form of [`MixtureSpec::apply`].
pub fn mixture_apply(kind: MixtureKind, mix: &MixtureSpec, a: &SymMatrix) -> Result<SymMatrix> {
    if a.dim() != mix.n() {
        return Err(SpinError::DimensionMismatch { expected: mix.n(), found: a.dim() });
    }
    if kind == MixtureKind::XiSecond && mix.terms().is_empty() {
        return Err(SpinError::Invalid("second derivative needs at least one term".into()));
    }
    Ok(mix.apply(kind, a))
}
