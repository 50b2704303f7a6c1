use rayon::prelude::*;

use super::{eval_cs_continuous, sandwich_integral, ContinuousPoint};
use crate::error::{Result, SpinError};
use crate::mat_core::{chol_logdet, sym_inverse, ConstraintMatrix, MixtureSpec, SymMatrix};

/// Uniform grid resolution for support diagnostics (knots are added on top).
pub const SUPPORT_GRID: usize = 512;

/// Bounds on the top support point `T` and on `‖(Q - Φ(T))⁻¹‖_∞` for minimizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleBox {
    pub t_max: f64,
    pub l_max: f64,
}

impl FeasibleBox {
    /// Whether `p` satisfies both bounds.
    pub fn contains(&self, p: &ContinuousPoint) -> bool {
        let t = p.t_x();
        if t > self.t_max {
            return false;
        }
        match sym_inverse(&(p.phi.constraint() - &p.phi.value(t))) {
            Ok(inv) => inv.norm_inf() <= self.l_max,
            Err(_) => false,
        }
    }
}

/// `⟨hh + ξ'(Q), Q⟩ + n - log|Q|`.
fn box_exponent(mix: &MixtureSpec, q: &SymMatrix) -> Result<f64> {
    let lhs = &mix.field_outer() + &mix.xi_prime(q);
    Ok(lhs.dot(q) + q.dim() as f64 - chol_logdet(q)?)
}

pub fn feasible_box(mix: &MixtureSpec, qc: &ConstraintMatrix) -> Result<FeasibleBox> {
    let q = qc.matrix();
    if mix.n() != q.dim() {
        return Err(SpinError::DimensionMismatch { expected: q.dim(), found: mix.n() });
    }
    let a = box_exponent(mix, q)?;
    let n = q.dim() as f64;
    Ok(FeasibleBox { t_max: n - n.powf(-0.5) * (-a).exp(), l_max: n.sqrt() * a.exp() })
}

/// A support point together with the margin of the necessary condition
/// `⟨hh + ξ'(Q), Q⟩ + n - log|Q| + log|Q - Φ(t)| ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportAtom {
    pub t: f64,
    /// Point mass, zero for points inside an absolutely continuous piece.
    pub mass: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportDiagnostic {
    /// `(t, Ψ(t))` with `Ψ(t) = hh + ξ'(Φ(t)) - ∫_0^t Φ̂⁻¹ Φ' Φ̂⁻¹`.
    pub psi: Vec<(f64, SymMatrix)>,
    pub atoms: Vec<SupportAtom>,
}

impl SupportDiagnostic {
    pub fn flagged(&self) -> Vec<&SupportAtom> {
        self.atoms.iter().filter(|a| !a.holds).collect()
    }

    pub fn ok(&self) -> bool {
        self.atoms.iter().all(|a| a.holds)
    }
}

pub fn support_check(p: &ContinuousPoint, mix: &MixtureSpec) -> Result<SupportDiagnostic> {
    let q = p.phi.constraint();
    let end = p.end();
    let grid: Vec<f64> = (0..SUPPORT_GRID).map(|i| i as f64 * end / SUPPORT_GRID as f64).collect();

    let hh = mix.field_outer();
    let psi = sandwich_integral(p, &grid)?
        .into_iter()
        .map(|(t, j)| (t, &(&hh + &mix.xi_prime(&p.phi.value(t))) - &j))
        .collect();

    let a = box_exponent(mix, q)?;
    let margin = |t: f64| chol_logdet(&(q - &p.phi.value(t))).map_or(f64::NEG_INFINITY, |l| a + l);
    let mut points: Vec<(f64, f64)> = p.x.atoms();
    points.extend(grid.iter().filter(|&&t| p.x.increasing_at(t)).map(|&t| (t, 0.0)));
    if points.iter().all(|&(t, _)| t != p.t_x()) {
        points.push((p.t_x(), 0.0));
    }
    points.sort_by(|u, v| u.0.total_cmp(&v.0));
    let atoms = points
        .into_iter()
        .map(|(t, mass)| {
            let m = margin(t);
            SupportAtom { t, mass, margin: m, holds: m >= 0.0 }
        })
        .collect();
    Ok(SupportDiagnostic { psi, atoms })
}

/// Local Lipschitz constant on the box with inverse bound `l`: the sum of the constants of the
/// field term, the mixture term, the log-determinant at eigenvalue floor `(√n L)⁻¹` and the
/// inverse integral.
pub fn lipschitz_constant(mix: &MixtureSpec, l: f64) -> f64 {
    let n = mix.n();
    let nf = n as f64;
    let n2 = nf * nf;
    let field = n2 * mix.field_outer().norm_inf();
    let mixture = n2 * mix.xi_prime(&SymMatrix::filled(n, 1.0)).norm_inf();
    let factorial: f64 = (1..n).map(|k| k as f64).product();
    let logdet = (nf.sqrt() * l).powi(n as i32) * n2 * factorial;
    let inverse = 4.0 * n2 * n2 * l * l;
    field + mixture + logdet + inverse
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzProbe {
    pub empirical_modulus: f64,
    pub bound: f64,
    /// Pairs contributing a ratio.
    pub used: usize,
    /// Pairs skipped for zero distance or lying outside the box.
    pub skipped: usize,
}

/// Largest observed `|C(p) - C(p')| / dist(p, p')` over the pairs, next to the analytic bound.
pub fn lipschitz_probe(
    pairs: &[(ContinuousPoint, ContinuousPoint)],
    mix: &MixtureSpec,
    bx: &FeasibleBox,
) -> Result<LipschitzProbe> {
    let ratios: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let d = a.distance(b);
            if d == 0.0 || !bx.contains(a) || !bx.contains(b) {
                return Ok(None);
            }
            let diff = eval_cs_continuous(a, mix)? - eval_cs_continuous(b, mix)?;
            Ok(Some(diff.abs() / d))
        })
        .collect::<Result<_>>()?;
    let used = ratios.iter().flatten().count();
    Ok(LipschitzProbe {
        empirical_modulus: ratios.iter().flatten().copied().fold(0.0, f64::max),
        bound: lipschitz_constant(mix, bx.l_max),
        used,
        skipped: pairs.len() - used,
    })
}
