//! Exact evaluation of the Parisi and Crisanti–Sommers functionals, the log-determinant barrier,
//! the perturbation error terms and the approximate functionals used by the duality argument.
//!
//! Barrier convention: the perturbed value is `base + eps·barrier`. Every formula written inside
//! the halved bracket `½[…]` therefore carries the weight `2·eps`, see [`bracket_weight`].

use crate::error::{Result, SpinError};
use crate::mat_core::{hadamard_div, MixtureSpec, PdFactor, SymMatrix};
use crate::path_model::{d_sequence_unchecked, lambda_sequence, lambda_sequence_unchecked, DiscretePath};

/// Which direction of the duality argument an object belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Critical points of the Parisi side bound the Crisanti–Sommers side from above.
    Lower,
    /// Critical points of the Crisanti–Sommers side bound the Parisi side from above.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    Parisi,
    Cs,
}

/// Point at which a functional is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Point<'a> {
    Parisi { lambda: &'a SymMatrix, path: &'a DiscretePath },
    Cs { path: &'a DiscretePath },
}

/// Barrier weight inside `½[…]` for a user-facing `eps`.
pub fn bracket_weight(eps: f64) -> f64 {
    2.0 * eps
}

fn factor_or(m: &SymMatrix, err: impl FnOnce() -> SpinError) -> Result<PdFactor> {
    PdFactor::new(m).map_err(|_| err())
}

fn infeasible(reason: impl Into<String>) -> SpinError {
    SpinError::InfeasiblePath { reason: reason.into() }
}

/// Discrete Parisi functional.
pub fn eval_parisi(lambda: &SymMatrix, path: &DiscretePath, mix: &MixtureSpec) -> Result<f64> {
    let r = path.r();
    let n = path.n();
    let ms = lambda_sequence(lambda, path, mix)?;
    let mult_err = |p: usize| {
        let ms = &ms;
        move || SpinError::InfeasibleMultiplier { min_eig: crate::mat_core::spectral_floor(ms.level(p)) }
    };
    let f1 = factor_or(ms.level(1), mult_err(1))?;
    let f_top = factor_or(lambda, mult_err(r))?;
    let l1_inv = f1.inverse();
    let hh = mix.field_outer();

    let mut total = hh.dot(&l1_inv) + lambda.dot(path.constraint()) - n as f64 - f_top.logdet();
    let mut logdets = vec![None; r + 1];
    logdets[1] = Some(f1.logdet());
    logdets[r] = Some(f_top.logdet());
    for k in 1..r {
        let xk = path.weight(k);
        if xk == 0.0 {
            continue;
        }
        for p in [k, k + 1] {
            if logdets[p].is_none() {
                logdets[p] = Some(factor_or(ms.level(p), mult_err(p))?.logdet());
            }
        }
        total += (logdets[k + 1].unwrap() - logdets[k].unwrap()) / xk;
    }
    total += mix.xi_prime(path.q(1)).dot(&l1_inv);
    let theta_sum: Vec<f64> = path.levels().iter().map(|q| mix.theta(q).sum()).collect();
    for k in 1..r {
        total -= path.weight(k) * (theta_sum[k + 1] - theta_sum[k]);
    }
    Ok(0.5 * total)
}

/// Discrete Crisanti–Sommers functional, `r ≥ 2`.
pub fn eval_cs(path: &DiscretePath, mix: &MixtureSpec) -> Result<f64> {
    let r = path.r();
    if r < 2 {
        return Err(SpinError::Invalid("the Crisanti-Sommers functional needs r >= 2".into()));
    }
    let x_last = path.weight(r - 1);
    if !(x_last > 0.0) {
        return Err(SpinError::Invalid("last weight must be positive".into()));
    }
    let d = d_sequence_unchecked(path);
    let top = factor_or(&path.increment(r - 1), || infeasible("Q - Q_(r-1) is not positive definite"))?;
    let d_err = |p: usize| move || infeasible(format!("D_{p} is not positive definite"));
    let f1 = factor_or(d.level(1), d_err(1))?;
    let hh = mix.field_outer();

    let mut total = hh.dot(d.level(1)) + top.logdet() / x_last;
    let mut logdets = vec![None; r];
    logdets[1] = Some(f1.logdet());
    for k in 1..r.saturating_sub(1) {
        let xk = path.weight(k);
        if xk == 0.0 {
            continue;
        }
        for p in [k, k + 1] {
            if logdets[p].is_none() {
                logdets[p] = Some(factor_or(d.level(p), d_err(p))?.logdet());
            }
        }
        total -= (logdets[k + 1].unwrap() - logdets[k].unwrap()) / xk;
    }
    total += path.q(1).dot(&f1.inverse());
    let xi_sum: Vec<f64> = path.levels().iter().map(|q| mix.xi(q).sum()).collect();
    for k in 1..r {
        total += path.weight(k) * (xi_sum[k + 1] - xi_sum[k]);
    }
    Ok(0.5 * total)
}

/// `−Σ_{0≤k≤r−1} log det(Q_{k+1} − Q_k)`.
pub fn eval_barrier(path: &DiscretePath) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..path.r() {
        total -= PdFactor::new(&path.increment(k)).map_err(|_| SpinError::DegenerateIncrement(k))?.logdet();
    }
    Ok(total)
}

/// `base + eps · barrier`.
pub fn eval_perturbed(point: Point<'_>, mix: &MixtureSpec, eps: f64) -> Result<f64> {
    let (base, path) = match point {
        Point::Parisi { lambda, path } => (eval_parisi(lambda, path, mix)?, path),
        Point::Cs { path } => (eval_cs(path, mix)?, path),
    };
    if eps == 0.0 {
        return Ok(base);
    }
    Ok(base + eps * eval_barrier(path)?)
}

/// Error terms `E₁ … E_r` (with `E_r = 0`) and `Ē₁ … Ē_{r−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTerms {
    pub side: Side,
    e: Vec<SymMatrix>,
    ebar: Vec<SymMatrix>,
}

impl ErrorTerms {
    pub fn r(&self) -> usize {
        self.e.len()
    }

    /// `E_p` for `1 ≤ p ≤ r`.
    pub fn e(&self, p: usize) -> &SymMatrix {
        &self.e[p - 1]
    }

    /// `Ē_p` for `1 ≤ p ≤ r` (`Ē_r = 0`).
    pub fn ebar(&self, p: usize) -> &SymMatrix {
        &self.ebar[p - 1]
    }
}

/// Error terms for either side. Needs strictly increasing weights and PD increments.
pub fn error_terms(side: Side, path: &DiscretePath, mix: &MixtureSpec) -> Result<ErrorTerms> {
    let r = path.r();
    let n = path.n();
    for p in 1..r {
        if !(path.weight(p) > path.weight(p - 1)) {
            return Err(SpinError::NonStrictWeights(p));
        }
    }
    let inc_inv: Vec<SymMatrix> = (0..r)
        .map(|k| {
            PdFactor::new(&path.increment(k)).map(|f| f.inverse()).map_err(|_| SpinError::DegenerateIncrement(k))
        })
        .collect::<Result<_>>()?;
    let mut e = Vec::with_capacity(r);
    for p in 1..r {
        let mut diff = &inc_inv[p] - &inc_inv[p - 1];
        if side == Side::Lower {
            diff = hadamard_div(&diff, &mix.xi_second(path.q(p)))?;
        }
        e.push(diff.scaled(1.0 / (path.weight(p) - path.weight(p - 1))));
    }
    e.push(SymMatrix::zeros(n));
    let mut ebar = vec![SymMatrix::zeros(n); r];
    for p in (1..r).rev() {
        let mut next = ebar[p].clone();
        next.axpy(path.weight(p), &(&e[p] - &e[p - 1]));
        ebar[p - 1] = next;
    }
    Ok(ErrorTerms { side, e, ebar })
}

/// `D_p(ε) = D_p + εĒ_p` for `1 ≤ p ≤ r−1` with `ε` already in bracket weight.
pub(crate) fn shifted_d(path: &DiscretePath, et: &ErrorTerms, w: f64) -> Vec<SymMatrix> {
    let d = d_sequence_unchecked(path);
    d.seq.iter().enumerate().map(|(i, dp)| dp + &et.ebar(i + 1).scaled(w)).collect()
}

/// `Λ_p(ε) = Λ_p + εĒ_p` for `1 ≤ p ≤ r` with `ε` already in bracket weight.
pub(crate) fn shifted_lambda(
    lambda: &SymMatrix,
    path: &DiscretePath,
    mix: &MixtureSpec,
    et: &ErrorTerms,
    w: f64,
) -> Vec<SymMatrix> {
    let ms = lambda_sequence_unchecked(lambda, path, mix);
    ms.seq.iter().enumerate().map(|(i, lp)| lp + &et.ebar(i + 1).scaled(w)).collect()
}

fn log_increments(path: &DiscretePath) -> Result<f64> {
    Ok(-eval_barrier(path)?)
}

/// Approximate Crisanti–Sommers functional built from the lower-side error terms.
/// At a critical point of the perturbed Parisi functional the two agree.
pub fn eval_approx_lower(path: &DiscretePath, mix: &MixtureSpec, eps: f64) -> Result<f64> {
    let r = path.r();
    if r < 2 {
        return Err(SpinError::Invalid("approximate functionals need r >= 2".into()));
    }
    let w = bracket_weight(eps);
    let et = error_terms(Side::Lower, path, mix)?;
    let de = shifted_d(path, &et, w);
    let de_f: Vec<PdFactor> = de.iter().map(PdFactor::new).collect::<Result<_>>()?;
    let de_inv: Vec<SymMatrix> = de_f.iter().map(|f| f.inverse()).collect();
    let dl = |p: usize| &de_f[p - 1];
    let dinv = |p: usize| &de_inv[p - 1];
    let x = path.x();
    let hh = mix.field_outer();
    let xi_sum: Vec<f64> = path.levels().iter().map(|q| mix.xi(q).sum()).collect();

    let mut t = hh.dot(&de[0]);
    t += dl(r - 1).logdet() / x[r - 1];
    for k in 1..=r.saturating_sub(2) {
        t -= (dl(k + 1).logdet() - dl(k).logdet()) / x[k];
    }
    t += path.q(1).dot(dinv(1));
    for k in 1..r {
        t += x[k] * (xi_sum[k + 1] - xi_sum[k]);
    }
    for k in 1..=r.saturating_sub(2) {
        t -= w * (et.ebar(k + 1) - et.ebar(k)).dot(&mix.xi_prime(path.q(k + 1)));
    }
    for k in 1..=r.saturating_sub(2) {
        t -= (w / x[k]) * dinv(k + 1).dot(&(et.ebar(k) - et.ebar(k + 1)));
    }
    t -= w * dinv(r - 1).dot(et.ebar(r - 1));
    t += w * mix.xi_prime(path.q(r - 1)).dot(et.ebar(r - 1));
    t -= w * log_increments(path)?;
    Ok(0.5 * t)
}

/// Approximate Parisi functional built from the upper-side error terms.
/// At a critical point of the perturbed Crisanti–Sommers functional (with the multiplier
/// from [`crate::variation::upper_multiplier`]) the two agree.
pub fn eval_approx_upper(lambda: &SymMatrix, path: &DiscretePath, mix: &MixtureSpec, eps: f64) -> Result<f64> {
    let r = path.r();
    let n = path.n();
    if r < 2 {
        return Err(SpinError::Invalid("approximate functionals need r >= 2".into()));
    }
    let w = bracket_weight(eps);
    let et = error_terms(Side::Upper, path, mix)?;
    let mut le = shifted_lambda(lambda, path, mix, &et, w);
    le[r - 1] = lambda.clone();
    let le_f: Vec<PdFactor> = le.iter().map(PdFactor::new).collect::<Result<_>>()?;
    let le_inv: Vec<SymMatrix> = le_f.iter().map(|f| f.inverse()).collect();
    let ll = |p: usize| &le_f[p - 1];
    let linv = |p: usize| &le_inv[p - 1];
    let x = path.x();
    let hh = mix.field_outer();
    let theta_sum: Vec<f64> = path.levels().iter().map(|q| mix.theta(q).sum()).collect();

    let mut t = lambda.dot(path.constraint()) - n as f64 - ll(r).logdet();
    for k in 1..r {
        t += (ll(k + 1).logdet() - ll(k).logdet()) / x[k];
    }
    t += linv(1).dot(&(&hh + &mix.xi_prime(path.q(1))));
    for k in 1..r {
        t -= x[k] * (theta_sum[k + 1] - theta_sum[k]);
    }
    for k in 1..=r.saturating_sub(2) {
        t -= w * (et.ebar(k + 1) - et.ebar(k)).dot(path.q(k));
    }
    for k in 1..=r.saturating_sub(2) {
        t += (w / x[k]) * linv(k).dot(&(et.ebar(k) - et.ebar(k + 1)));
    }
    t += w * linv(r - 1).dot(et.ebar(r - 1));
    t += w * path.q(r - 1).dot(et.ebar(r - 1));
    t -= w * log_increments(path)?;
    Ok(0.5 * t)
}

/// Dispatches on the side; the upper side needs a multiplier.
pub fn eval_approx(
    side: Side,
    eps: f64,
    lambda: Option<&SymMatrix>,
    path: &DiscretePath,
    mix: &MixtureSpec,
) -> Result<f64> {
    match side {
        Side::Lower => eval_approx_lower(path, mix, eps),
        Side::Upper => {
            let l = lambda.ok_or_else(|| SpinError::Invalid("upper side needs a multiplier".into()))?;
            eval_approx_upper(l, path, mix, eps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x1: f64, q1: f64) -> DiscretePath {
        DiscretePath::new(vec![0.0, x1], vec![SymMatrix::diag(&[q1])], &SymMatrix::identity(1)).unwrap()
    }

    #[test]
    fn parisi_examples() {
        let mix = MixtureSpec::pure2(&[1.0]);
        let v = eval_parisi(&SymMatrix::diag(&[3.0]), &scalar(0.5, 0.25), &mix).unwrap();
        assert!((v - 0.615112).abs() < 5e-7, "{v}");
        let mix = MixtureSpec::pure2(&[0.3]);
        let v = eval_parisi(&SymMatrix::diag(&[1.18]), &scalar(1.0, 0.0), &mix).unwrap();
        assert!((v - 0.045).abs() < 1e-12, "{v}");
        let zero = MixtureSpec::new(2, vec![], vec![0.0, 0.0]).unwrap();
        let q = SymMatrix::from_upper(2, &[1.0, 0.3, 1.0]).unwrap();
        let single = DiscretePath::new(vec![0.0], vec![], &q).unwrap();
        assert_eq!(eval_parisi(&SymMatrix::identity(2), &single, &zero).unwrap(), 0.0);
    }

    #[test]
    fn cs_examples() {
        let v = eval_cs(&scalar(1.0, 0.0), &MixtureSpec::pure2(&[0.3])).unwrap();
        assert!((v - 0.045).abs() < 1e-15);
        let q = 1.0 - 0.5f64.sqrt();
        let v = eval_cs(&scalar(1.0, q), &MixtureSpec::pure2(&[1.0])).unwrap();
        assert!((v - 0.490929).abs() < 5e-6, "{v}");
        let v = eval_cs(&scalar(0.5, 0.25), &MixtureSpec::pure2(&[1.0])).unwrap();
        assert!((v - 0.280026).abs() < 5e-7, "{v}");
    }

    #[test]
    fn barrier_examples() {
        assert!((eval_barrier(&scalar(0.5, 0.25)).unwrap() - 1.673976).abs() < 5e-7);
        assert!((eval_barrier(&scalar(0.5, 0.5)).unwrap() - 1.386294).abs() < 5e-7);
        assert_eq!(eval_barrier(&scalar(0.5, 0.0)), Err(SpinError::DegenerateIncrement(0)));
    }

    #[test]
    fn perturbed_examples() {
        let mix = MixtureSpec::pure2(&[1.0]);
        let path = scalar(0.5, 0.25);
        let l = SymMatrix::diag(&[3.0]);
        let pt = Point::Parisi { lambda: &l, path: &path };
        assert_eq!(eval_perturbed(pt, &mix, 0.0).unwrap(), eval_parisi(&l, &path, &mix).unwrap());
        assert!((eval_perturbed(pt, &mix, 0.1).unwrap() - 0.782510).abs() < 5e-7);
        assert!(eval_perturbed(pt, &mix, 0.01).unwrap() <= eval_perturbed(pt, &mix, 0.02).unwrap());
    }

    #[test]
    fn error_term_examples() {
        let mix = MixtureSpec::pure2(&[1.0]);
        let path = scalar(0.5, 0.25);
        let up = error_terms(Side::Upper, &path, &mix).unwrap();
        assert!((up.e(1)[(0, 0)] + 16.0 / 3.0).abs() < 1e-12);
        assert_eq!(up.e(2)[(0, 0)], 0.0);
        assert!((up.ebar(1)[(0, 0)] - (-0.5 * up.e(1)[(0, 0)])).abs() < 1e-15);
        let lo = error_terms(Side::Lower, &path, &mix).unwrap();
        assert!((lo.e(1)[(0, 0)] + 8.0 / 3.0).abs() < 1e-12);
        let flat = DiscretePath::new(
            vec![0.0, 0.5, 0.5],
            vec![SymMatrix::diag(&[0.2]), SymMatrix::diag(&[0.6])],
            &SymMatrix::identity(1),
        )
        .unwrap();
        assert_eq!(error_terms(Side::Upper, &flat, &mix), Err(SpinError::NonStrictWeights(2)));
        let zero_b2 = MixtureSpec::pure2(&[0.0]);
        assert!(matches!(error_terms(Side::Lower, &path, &zero_b2), Err(SpinError::ZeroDivisor(0, 0))));
    }

    #[test]
    fn approx_at_zero_eps_reduces() {
        let mix = MixtureSpec::pure2(&[0.8]);
        let path = DiscretePath::new(
            vec![0.0, 0.4, 1.0],
            vec![SymMatrix::diag(&[0.2]), SymMatrix::diag(&[0.55])],
            &SymMatrix::identity(1),
        )
        .unwrap();
        let lo = eval_approx_lower(&path, &mix, 0.0).unwrap();
        assert!((lo - eval_cs(&path, &mix).unwrap()).abs() < 1e-14);
        let l = SymMatrix::diag(&[2.7]);
        let up = eval_approx_upper(&l, &path, &mix, 0.0).unwrap();
        assert!((up - eval_parisi(&l, &path, &mix).unwrap()).abs() < 1e-14);
    }
}
