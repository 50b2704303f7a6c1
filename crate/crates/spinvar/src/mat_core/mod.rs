//! Symmetric-matrix kernels, mixture functions and directional derivatives.

mod calculus;
mod mixture;
mod sym;

pub use calculus::{dir_derivative, DirArgs};
pub use mixture::{mixture_apply, MixtureKind, MixtureSpec, MixtureTerm};
pub use sym::{
    chol_logdet, frobenius, hadamard_div, spectral_ceiling, spectral_floor, sym_inverse, PdFactor, SymMatrix,
    DIV_TOL, PSD_TOL,
};

use crate::error::{Result, SpinError};

/// Overlap constraint: positive definite with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    q: SymMatrix,
}

impl ConstraintMatrix {
    pub fn new(q: SymMatrix) -> Result<Self> {
        let n = q.dim();
        for i in 0..n {
            if q[(i, i)] != 1.0 {
                return Err(SpinError::Invalid("unit diagonal required".into()));
            }
            for j in 0..n {
                if !(-1.0..=1.0).contains(&q[(i, j)]) {
                    return Err(SpinError::Invalid("off-diagonal entries must lie in [-1, 1]".into()));
                }
            }
        }
        if !q.is_pd() {
            return Err(SpinError::Invalid("constraint must be positive definite".into()));
        }
        Ok(Self { q })
    }

    pub fn identity(n: usize) -> Self {
        Self { q: SymMatrix::identity(n) }
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }
}
