//! Adaptive Gauss–Legendre quadrature for vector-valued integrands.

use std::sync::OnceLock;

use crate::error::Result;

const ORDER: usize = 10;
const MAX_DEPTH: u32 = 40;

fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(ORDER))
}

/// Nodes and weights on [-1, 1] by Newton iteration on the Legendre polynomial.
fn legendre_rule(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        out.push((z, 2.0 / ((1.0 - z * z) * dp * dp)));
    }
    out
}

fn fixed(f: &impl Fn(f64) -> Result<Vec<f64>>, a: f64, b: f64) -> Result<Vec<f64>> {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc: Vec<f64> = Vec::new();
    for &(z, w) in rule() {
        let v = f(mid + half * z)?;
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        }
        acc.iter_mut().zip(&v).for_each(|(s, vi)| *s += w * half * vi);
    }
    Ok(acc)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn refine(f: &impl Fn(f64) -> Result<Vec<f64>>, a: f64, b: f64, whole: Vec<f64>, tol: f64, depth: u32) -> Result<Vec<f64>> {
    let m = 0.5 * (a + b);
    let left = fixed(f, a, m)?;
    let right = fixed(f, m, b)?;
    let halves: Vec<f64> = left.iter().zip(&right).map(|(l, r)| l + r).collect();
    if depth >= MAX_DEPTH || max_diff(&whole, &halves) <= tol {
        return Ok(halves);
    }
    let l = refine(f, a, m, left, 0.5 * tol, depth + 1)?;
    let r = refine(f, m, b, right, 0.5 * tol, depth + 1)?;
    Ok(l.iter().zip(&r).map(|(x, y)| x + y).collect())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` in every component.
pub(crate) fn integrate(f: impl Fn(f64) -> Result<Vec<f64>>, a: f64, b: f64, tol: f64) -> Result<Vec<f64>> {
    let whole = fixed(&f, a, b)?;
    if b <= a {
        return Ok(whole.iter().map(|_| 0.0).collect());
    }
    refine(&f, a, b, whole, tol, 0)
}

pub(crate) fn integrate_scalar(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    Ok(integrate(|t| f(t).map(|v| vec![v]), a, b, tol)?[0])
}
