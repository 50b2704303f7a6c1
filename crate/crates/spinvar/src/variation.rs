//! First variations of both functionals, finite-difference oracles, critical-point residuals,
//! and the tilde transforms with their one-sided bounds.
//!
//! Every representer `G` satisfies `d/dt f(… + 2tC …)|₀ = ⟨G, C⟩` for symmetric `C`.

use crate::error::{Result, SpinError};
use crate::functionals::{
    bracket_weight, error_terms, eval_approx_lower, eval_approx_upper, eval_cs, eval_parisi, eval_perturbed,
    shifted_d, shifted_lambda, Point, Side,
};
use crate::mat_core::{MixtureSpec, PdFactor, SymMatrix};
use crate::path_model::{d_sequence_unchecked, lambda_sequence, DiscretePath};

/// Agreement tolerance used by [`bound_check`].
pub const NUM_TOL: f64 = 1e-9;

/// Representers of the first variation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// With respect to `Λ` (Parisi side only).
    pub d_lambda: Option<SymMatrix>,
    /// With respect to `Q_p`, `p = 1 … r−1`.
    pub d_q: Vec<SymMatrix>,
}

impl GradientBundle {
    /// Largest entry over all representers.
    pub fn norm_inf(&self) -> f64 {
        self.d_lambda.iter().chain(self.d_q.iter()).map(SymMatrix::norm_inf).fold(0.0, f64::max)
    }
}

fn increment_inverses(path: &DiscretePath) -> Result<Vec<SymMatrix>> {
    (0..path.r())
        .map(|k| {
            PdFactor::new(&path.increment(k)).map(|f| f.inverse()).map_err(|_| SpinError::DegenerateIncrement(k))
        })
        .collect()
}

/// Barrier contribution `w((Q_{p+1}−Q_p)⁻¹ − (Q_p−Q_{p−1})⁻¹)` to the `Q_p` representer.
fn barrier_terms(path: &DiscretePath, eps: f64) -> Result<Option<Vec<SymMatrix>>> {
    if eps == 0.0 {
        return Ok(None);
    }
    let w = bracket_weight(eps);
    let inv = increment_inverses(path)?;
    Ok(Some((1..path.r()).map(|p| (&inv[p] - &inv[p - 1]).scaled(w)).collect()))
}

fn pd_inverse(m: &SymMatrix, err: impl FnOnce() -> SpinError) -> Result<SymMatrix> {
    PdFactor::new(m).map(|f| f.inverse()).map_err(|_| err())
}

/// Representers of the perturbed Parisi functional.
pub fn grad_parisi(lambda: &SymMatrix, path: &DiscretePath, mix: &MixtureSpec, eps: f64) -> Result<GradientBundle> {
    let r = path.r();
    let ms = lambda_sequence(lambda, path, mix)?;
    let infeasible = || SpinError::InfeasibleMultiplier { min_eig: f64::NAN };
    let inv: Vec<SymMatrix> = ms.seq.iter().map(|l| pd_inverse(l, infeasible)).collect::<Result<_>>()?;
    let linv = |p: usize| &inv[p - 1];
    let hh = mix.field_outer();
    let anchor = linv(1).sandwich(&(&hh + &mix.xi_prime(path.q(1))));

    // Running sum Σ_{k<p} (1/x_k)(Λ_k⁻¹ − Λ_{k+1}⁻¹).
    let mut acc = SymMatrix::zeros(path.n());
    let barrier = barrier_terms(path, eps)?;
    let mut d_q = Vec::with_capacity(r.saturating_sub(1));
    for p in 1..r {
        if p >= 2 {
            let xk = path.weight(p - 1);
            if xk != 0.0 {
                acc.axpy(1.0 / xk, &(linv(p - 1) - linv(p)));
            }
        }
        let inner = &(path.q(p) - &anchor) - &acc;
        let mut g = mix.xi_second(path.q(p)).hadamard(&inner).scaled(path.weight(p) - path.weight(p - 1));
        if let Some(b) = &barrier {
            g += &b[p - 1];
        }
        d_q.push(g);
    }
    if r >= 2 {
        let xk = path.weight(r - 1);
        if xk != 0.0 {
            acc.axpy(1.0 / xk, &(linv(r - 1) - linv(r)));
        }
    }
    let d_lambda = &(&(path.constraint() - linv(r)) - &anchor) - &acc;
    Ok(GradientBundle { d_lambda: Some(d_lambda), d_q })
}

/// Representers of the perturbed Crisanti–Sommers functional.
pub fn grad_cs(path: &DiscretePath, mix: &MixtureSpec, eps: f64) -> Result<GradientBundle> {
    let r = path.r();
    if r < 2 {
        return Err(SpinError::Invalid("the Crisanti-Sommers functional needs r >= 2".into()));
    }
    let d = d_sequence_unchecked(path);
    let inv: Vec<SymMatrix> = d
        .seq
        .iter()
        .enumerate()
        .map(|(i, m)| {
            pd_inverse(m, || SpinError::InfeasiblePath { reason: format!("D_{} is not positive definite", i + 1) })
        })
        .collect::<Result<_>>()?;
    let dinv = |p: usize| &inv[p - 1];
    let hh = mix.field_outer();
    let base = &hh - &dinv(1).sandwich(path.q(1));
    let barrier = barrier_terms(path, eps)?;

    // Running sum Σ_{k<p} (1/x_k)(D_{k+1}⁻¹ − D_k⁻¹).
    let mut acc = SymMatrix::zeros(path.n());
    let mut d_q = Vec::with_capacity(r - 1);
    for p in 1..r {
        if p >= 2 {
            let xk = path.weight(p - 1);
            if xk != 0.0 {
                acc.axpy(1.0 / xk, &(dinv(p) - dinv(p - 1)));
            }
        }
        let inner = &(&base - &acc) + &mix.xi_prime(path.q(p));
        let mut g = inner.scaled(path.weight(p - 1) - path.weight(p));
        if let Some(b) = &barrier {
            g += &b[p - 1];
        }
        d_q.push(g);
    }
    Ok(GradientBundle { d_lambda: None, d_q })
}

/// Central difference `(f(h) − f(−h)) / 2h`, halving `h` up to ten times when a probe fails.
pub fn fd_directional(f: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let mut step = h;
    for _ in 0..=10 {
        if let (Ok(a), Ok(b)) = (f(step), f(-step)) {
            return Ok((a - b) / (2.0 * step));
        }
        step *= 0.5;
    }
    Err(SpinError::InfeasibleStep)
}

/// Perturbed Parisi value with `Λ` moved along `2tC` (`level = None`) or `Q_level` moved along `2tC`.
pub fn parisi_along(
    lambda: &SymMatrix,
    path: &DiscretePath,
    mix: &MixtureSpec,
    eps: f64,
    level: Option<usize>,
    c: &SymMatrix,
    t: f64,
) -> Result<f64> {
    match level {
        None => {
            let l = lambda + &c.scaled(2.0 * t);
            eval_perturbed(Point::Parisi { lambda: &l, path }, mix, eps)
        }
        Some(p) => {
            let moved = move_level(path, p, c, t)?;
            eval_perturbed(Point::Parisi { lambda, path: &moved }, mix, eps)
        }
    }
}

/// Perturbed Crisanti–Sommers value with `Q_level` moved along `2tC`.
pub fn cs_along(path: &DiscretePath, mix: &MixtureSpec, eps: f64, level: usize, c: &SymMatrix, t: f64) -> Result<f64> {
    let moved = move_level(path, level, c, t)?;
    eval_perturbed(Point::Cs { path: &moved }, mix, eps)
}

fn move_level(path: &DiscretePath, p: usize, c: &SymMatrix, t: f64) -> Result<DiscretePath> {
    let mut free = path.free().to_vec();
    free[p - 1].axpy(2.0 * t, c);
    path.with_free(free)
}

/// Multiplier paired with a Crisanti–Sommers critical point:
/// `Λ = (Q − Q_{r−1})⁻¹ + ξ'(Q) − ξ'(Q_{r−1}) + w E_{r−1}` with upper-side `E`.
pub fn upper_multiplier(path: &DiscretePath, mix: &MixtureSpec, eps: f64) -> Result<SymMatrix> {
    let r = path.r();
    let top = pd_inverse(&path.increment(r - 1), || SpinError::DegenerateIncrement(r - 1))?;
    let mut l = &top + &(&mix.xi_prime(path.constraint()) - &mix.xi_prime(path.q(r - 1)));
    if eps != 0.0 {
        let et = error_terms(Side::Upper, path, mix)?;
        l.axpy(bracket_weight(eps), et.e(r - 1));
    }
    Ok(l)
}

/// Residuals of the matched-sequence critical equations.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalReport {
    pub side: Side,
    /// `‖Λ_p⁻¹ − D_p(ε)‖_∞` (lower) or `‖D_p⁻¹ − Λ_p(ε)‖_∞` (upper) for `p = 1 … r−1`.
    pub residuals: Vec<f64>,
    /// Residual of the first-level equation that anchors the matched sequences.
    pub anchor_residual: f64,
    pub max_residual: f64,
    /// `|𝒫^ε − 𝒞^ε_approx|` (lower) or `|𝒞^ε − 𝒫^ε_approx|` (upper).
    pub identity_gap: f64,
    /// Value of the perturbed functional at the point.
    pub value: f64,
}

/// Lower side uses the given `Λ`; upper side builds it with [`upper_multiplier`].
pub fn critical_residual(
    side: Side,
    lambda: Option<&SymMatrix>,
    path: &DiscretePath,
    mix: &MixtureSpec,
    eps: f64,
) -> Result<CriticalReport> {
    let r = path.r();
    let w = bracket_weight(eps);
    let et = error_terms(side, path, mix)?;
    let hh = mix.field_outer();
    let mut residuals = Vec::with_capacity(r - 1);
    let (anchor_residual, value, approx) = match side {
        Side::Lower => {
            let lambda = lambda.ok_or_else(|| SpinError::Invalid("lower side needs a multiplier".into()))?;
            let ms = lambda_sequence(lambda, path, mix)?;
            let de = shifted_d(path, &et, w);
            let mut l1_inv = None;
            for p in 1..r {
                let inv = pd_inverse(ms.level(p), || SpinError::InfeasibleMultiplier { min_eig: f64::NAN })?;
                residuals.push((&inv - &de[p - 1]).norm_inf());
                if p == 1 {
                    l1_inv = Some(inv);
                }
            }
            let l1_inv = l1_inv.expect("r >= 2");
            let anchor = l1_inv.sandwich(&(&hh + &mix.xi_prime(path.q(1))));
            let q1e = path.q(1) + &et.e(1).scaled(w);
            let value = eval_perturbed(Point::Parisi { lambda, path }, mix, eps)?;
            (((&q1e) - &anchor).norm_inf(), value, eval_approx_lower(path, mix, eps)?)
        }
        Side::Upper => {
            let built;
            let lambda = match lambda {
                Some(l) => l,
                None => {
                    built = upper_multiplier(path, mix, eps)?;
                    &built
                }
            };
            let le = shifted_lambda(lambda, path, mix, &et, w);
            let d = d_sequence_unchecked(path);
            let mut d1_inv = None;
            for p in 1..r {
                let inv = pd_inverse(d.level(p), || SpinError::InfeasiblePath {
                    reason: format!("D_{p} is not positive definite"),
                })?;
                residuals.push((&inv - &le[p - 1]).norm_inf());
                if p == 1 {
                    d1_inv = Some(inv);
                }
            }
            let d1_inv = d1_inv.expect("r >= 2");
            let rhs = &(&d1_inv.sandwich(path.q(1)) - &hh) + &et.e(1).scaled(w);
            let anchor = (&mix.xi_prime(path.q(1)) - &rhs).norm_inf();
            let value = eval_perturbed(Point::Cs { path }, mix, eps)?;
            (anchor, value, eval_approx_upper(lambda, path, mix, eps)?)
        }
    };
    let max_residual = residuals.iter().copied().fold(anchor_residual, f64::max);
    Ok(CriticalReport { side, residuals, anchor_residual, max_residual, identity_gap: (value - approx).abs(), value })
}

/// Lower side: `Q̃_p = Q_p + wE_p` (same weights).
pub fn tilde_path(path: &DiscretePath, mix: &MixtureSpec, eps: f64) -> Result<DiscretePath> {
    if eps == 0.0 {
        return Ok(path.clone());
    }
    let et = error_terms(Side::Lower, path, mix)?;
    let w = bracket_weight(eps);
    let free = (1..path.r()).map(|p| path.q(p) + &et.e(p).scaled(w)).collect();
    path.with_free(free)
}

/// Upper side: `Λ̃ = Λ + wĒ₁`.
pub fn tilde_multiplier(lambda: &SymMatrix, path: &DiscretePath, mix: &MixtureSpec, eps: f64) -> Result<SymMatrix> {
    if eps == 0.0 {
        return Ok(lambda.clone());
    }
    let et = error_terms(Side::Upper, path, mix)?;
    Ok(lambda + &et.ebar(1).scaled(bracket_weight(eps)))
}

/// Result of a tilde transform plus whether it stays in the functional's domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Tilde {
    Path { path: DiscretePath, feasible: bool },
    Multiplier { lambda: SymMatrix, feasible: bool },
}

pub fn tilde_transform(
    side: Side,
    lambda: Option<&SymMatrix>,
    path: &DiscretePath,
    mix: &MixtureSpec,
    eps: f64,
) -> Result<Tilde> {
    match side {
        Side::Lower => {
            let t = tilde_path(path, mix, eps)?;
            let feasible = t.min_increment_eig() > 0.0;
            Ok(Tilde::Path { path: t, feasible })
        }
        Side::Upper => {
            let built;
            let lambda = match lambda {
                Some(l) => l,
                None => {
                    built = upper_multiplier(path, mix, eps)?;
                    &built
                }
            };
            let t = tilde_multiplier(lambda, path, mix, eps)?;
            let feasible = lambda_sequence(&t, path, mix).is_ok();
            Ok(Tilde::Multiplier { lambda: t, feasible })
        }
    }
}

/// Both sides of a one-sided bound at a critical point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn slack(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// Lower: `𝒞^ε_approx(Q) ≥ 𝒞(x, Q̃)`. Upper: `𝒫^ε_approx(Λ, Q) ≥ 𝒫(Λ̃, x, Q)`.
pub fn bound_check(
    side: Side,
    lambda: Option<&SymMatrix>,
    path: &DiscretePath,
    mix: &MixtureSpec,
    eps: f64,
) -> Result<BoundCheck> {
    let (lhs, rhs) = match side {
        Side::Lower => (eval_approx_lower(path, mix, eps)?, eval_cs(&tilde_path(path, mix, eps)?, mix)?),
        Side::Upper => {
            let built;
            let lambda = match lambda {
                Some(l) => l,
                None => {
                    built = upper_multiplier(path, mix, eps)?;
                    &built
                }
            };
            let lt = tilde_multiplier(lambda, path, mix, eps)?;
            (eval_approx_upper(lambda, path, mix, eps)?, eval_parisi(&lt, path, mix)?)
        }
    };
    Ok(BoundCheck { lhs, rhs, holds: lhs >= rhs - NUM_TOL })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x1: f64, q1: f64) -> DiscretePath {
        DiscretePath::new(vec![0.0, x1], vec![SymMatrix::diag(&[q1])], &SymMatrix::identity(1)).unwrap()
    }

    #[test]
    fn parisi_stationary_single_level() {
        let beta: f64 = 0.3;
        let l = (1.0 + (1.0 + 8.0 * beta * beta).sqrt()) / 2.0;
        let path = DiscretePath::new(vec![0.0], vec![], &SymMatrix::identity(1)).unwrap();
        let g = grad_parisi(&SymMatrix::diag(&[l]), &path, &MixtureSpec::pure2(&[beta]), 0.0).unwrap();
        assert!(g.d_lambda.unwrap().norm_inf() < 1e-15);
        assert!(g.d_q.is_empty());
    }

    #[test]
    fn cs_stationary_one_step() {
        let q = 1.0 - 0.5f64.sqrt();
        let g = grad_cs(&scalar(1.0, q), &MixtureSpec::pure2(&[1.0]), 0.0).unwrap();
        assert!(g.d_q[0].norm_inf() < 1e-14);
    }

    #[test]
    fn parisi_scalar_reduction() {
        let (x1, q, l, h, b) = (0.6, 0.3, 2.5, 0.4, 0.9);
        let mix = MixtureSpec::pure2(&[b]).with_field(&[h]).unwrap();
        let g = grad_parisi(&SymMatrix::diag(&[l]), &scalar(x1, q), &mix, 0.0).unwrap();
        let l1 = l - x1 * (2.0 * b * b * (1.0 - q));
        let expect = x1 * (2.0 * b * b) * (q - (h * h + 2.0 * b * b * q) / (l1 * l1));
        assert!((g.d_q[0][(0, 0)] - expect).abs() < 1e-14);
    }

    #[test]
    fn fd_quadratic() {
        let d = fd_directional(|t| Ok((1.0 + t) * (1.0 + t)), 1e-5).unwrap();
        assert!((d - 2.0).abs() < 1e-10);
    }

    #[test]
    fn fd_halves_on_domain_exit() {
        let d = fd_directional(|t| if t.abs() > 1e-3 { Err(SpinError::InfeasibleStep) } else { Ok(t) }, 1e-2).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!(fd_directional(|_| Err(SpinError::InfeasibleStep), 1e-2).is_err());
    }

    #[test]
    fn tilde_identity_at_zero_eps() {
        let mix = MixtureSpec::pure2(&[1.0]);
        let path = scalar(1.0, 0.25);
        assert_eq!(tilde_path(&path, &mix, 0.0).unwrap(), path);
        let l = SymMatrix::diag(&[3.0]);
        assert_eq!(tilde_multiplier(&l, &path, &mix, 0.0).unwrap(), l);
        let b = bound_check(Side::Lower, None, &path, &mix, 0.0).unwrap();
        assert_eq!(b.lhs, b.rhs);
        let b = bound_check(Side::Upper, Some(&l), &path, &mix, 0.0).unwrap();
        assert_eq!(b.lhs, b.rhs);
    }

    #[test]
    fn generic_point_has_residual() {
        let mix = MixtureSpec::pure2(&[1.0]);
        let rep = critical_residual(Side::Lower, Some(&SymMatrix::diag(&[3.0])), &scalar(1.0, 0.25), &mix, 0.01)
            .unwrap();
        assert!(rep.max_residual > 1e-3);
    }
}
