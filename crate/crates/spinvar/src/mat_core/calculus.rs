//! Closed-form directional derivatives of the scalar matrix maps used by the functionals.

use crate::error::{Result, SpinError};
use crate::mat_core::mixture::MixtureSpec;
use crate::mat_core::sym::{sym_inverse, SymMatrix};

/// Base point and auxiliary matrices for [`dir_derivative`].
#[derive(Debug, Clone, Copy)]
pub enum DirArgs<'a> {
    /// `A ↦ tr(AB)` in direction `C`: `tr(BC)`.
    TracePair { b: &'a SymMatrix },
    /// `A ↦ log det A`: `tr(A⁻¹C)`.
    Logdet { a: &'a SymMatrix },
    /// `A ↦ tr(A⁻¹B)`: `−tr(A⁻¹BA⁻¹C)`.
    InversePair { a: &'a SymMatrix, b: &'a SymMatrix },
    /// `A ↦ Sum(ξ(A))`: `tr(ξ'(A)C)`.
    SumMixture { mix: &'a MixtureSpec, a: &'a SymMatrix },
}

pub fn dir_derivative(args: DirArgs<'_>, c: &SymMatrix) -> Result<f64> {
    let same = |m: &SymMatrix| {
        if m.dim() == c.dim() {
            Ok(())
        } else {
            Err(SpinError::DimensionMismatch { expected: m.dim(), found: c.dim() })
        }
    };
    match args {
        DirArgs::TracePair { b } => {
            same(b)?;
            Ok(b.dot(c))
        }
        DirArgs::Logdet { a } => {
            same(a)?;
            Ok(sym_inverse(a)?.dot(c))
        }
        DirArgs::InversePair { a, b } => {
            same(a)?;
            same(b)?;
            let inv = sym_inverse(a)?;
            Ok(-inv.sandwich(b).dot(c))
        }
        DirArgs::SumMixture { mix, a } => {
            same(a)?;
            Ok(mix.xi_prime(a).dot(c))
        }
    }
}
