//! Limited-memory quasi-Newton descent over lists of symmetric matrices with Armijo backtracking.
//! Infeasible trial points (objective returns an error) are rejected like failed Armijo tests.

use std::collections::VecDeque;

use crate::error::Result;
use crate::mat_core::SymMatrix;

pub(crate) type Blocks = Vec<SymMatrix>;

pub(crate) fn dot(a: &[SymMatrix], b: &[SymMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn axpy(y: &mut [SymMatrix], a: f64, x: &[SymMatrix]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| yi.axpy(a, xi));
}

fn scaled(x: &[SymMatrix], a: f64) -> Blocks {
    x.iter().map(|m| m.scaled(a)).collect()
}

fn diff(a: &[SymMatrix], b: &[SymMatrix]) -> Blocks {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn norm_inf(a: &[SymMatrix]) -> f64 {
    a.iter().map(SymMatrix::norm_inf).fold(0.0, f64::max)
}

/// Objective evaluated on blocks. `gradient` returns the Frobenius gradient.
pub(crate) trait BlockObjective {
    fn value(&self, z: &[SymMatrix]) -> Result<f64>;
    fn gradient(&self, z: &[SymMatrix]) -> Result<Blocks>;
    /// Convergence measure at `z` given its gradient.
    fn stationarity(&self, g: &[SymMatrix]) -> f64;
    fn project(&self, g: &mut Blocks) {
        let _ = g;
    }
    /// Extra per-iterate quantity recorded in the history.
    fn diagnostic(&self, z: &[SymMatrix]) -> f64 {
        let _ = z;
        f64::NAN
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub memory: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct IterRecord {
    pub iter: usize,
    pub value: f64,
    pub stationarity: f64,
    pub diagnostic: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub z: Blocks,
    pub value: f64,
    pub stationarity: f64,
    pub iters: usize,
    pub converged: bool,
    pub history: Vec<IterRecord>,
}

const MAX_BACKTRACKS: usize = 80;

pub(crate) fn minimize(obj: &impl BlockObjective, z0: Blocks, s: &LbfgsSettings) -> Result<LbfgsOutcome> {
    let mut z = z0;
    let mut f = obj.value(&z)?;
    let mut g = obj.gradient(&z)?;
    obj.project(&mut g);
    let mut stat = obj.stationarity(&g);
    let mut mem: VecDeque<(Blocks, Blocks, f64)> = VecDeque::with_capacity(s.memory);
    let mut history = vec![IterRecord { iter: 0, value: f, stationarity: stat, diagnostic: obj.diagnostic(&z) }];
    let mut iters = 0;
    let mut fresh = true;

    while stat > s.tol && iters < s.max_iters {
        let mut d = direction(&g, &mem);
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            mem.clear();
            d = scaled(&g, -1.0);
            gd = dot(&g, &d);
        }
        let mut eta = if mem.is_empty() && fresh { (1.0 / norm_inf(&g).max(1e-300)).min(1.0) } else { 1.0 };
        let gnorm = dot(&g, &g).sqrt();
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial = z.clone();
            axpy(&mut trial, eta, &d);
            if let Ok(ft) = obj.value(&trial) {
                if ft.is_finite() {
                    let armijo = ft <= f + s.armijo_c * eta * gd;
                    let flat = ft <= f + 1e-13 * (1.0 + f.abs());
                    if armijo || flat {
                        if let Ok(mut gt) = obj.gradient(&trial) {
                            obj.project(&mut gt);
                            if armijo || dot(&gt, &gt).sqrt() < gnorm {
                                accepted = Some((trial, ft, gt));
                                break;
                            }
                        }
                    }
                }
            }
            eta *= s.shrink;
        }
        let Some((zn, fnew, gn)) = accepted else {
            if mem.is_empty() {
                break;
            }
            mem.clear();
            continue;
        };
        fresh = false;
        let sv = diff(&zn, &z);
        let yv = diff(&gn, &g);
        let sy = dot(&sv, &yv);
        if sy > 1e-16 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() {
            if mem.len() == s.memory {
                mem.pop_front();
            }
            mem.push_back((sv, yv, 1.0 / sy));
        }
        z = zn;
        f = fnew;
        g = gn;
        stat = obj.stationarity(&g);
        iters += 1;
        history.push(IterRecord { iter: iters, value: f, stationarity: stat, diagnostic: obj.diagnostic(&z) });
    }
    Ok(LbfgsOutcome { z, value: f, stationarity: stat, iters, converged: stat <= s.tol, history })
}

fn direction(g: &[SymMatrix], mem: &VecDeque<(Blocks, Blocks, f64)>) -> Blocks {
    let mut q: Blocks = scaled(g, -1.0);
    let mut alpha = Vec::with_capacity(mem.len());
    for (sv, yv, rho) in mem.iter().rev() {
        let a = rho * dot(sv, &q);
        axpy(&mut q, -a, yv);
        alpha.push(a);
    }
    if let Some((sv, yv, _)) = mem.back() {
        let gamma = dot(sv, yv) / dot(yv, yv);
        q = scaled(&q, gamma);
    }
    for ((sv, yv, rho), a) in mem.iter().zip(alpha.into_iter().rev()) {
        let b = rho * dot(yv, &q);
        axpy(&mut q, a - b, sv);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad;

    impl BlockObjective for Quad {
        fn value(&self, z: &[SymMatrix]) -> Result<f64> {
            let a = &z[0];
            let t = a - &SymMatrix::from_upper(2, &[1.0, 0.5, 2.0]).unwrap();
            Ok(t.dot(&t) + 3.0 * (a[(0, 0)] - 1.0).powi(2))
        }
        fn gradient(&self, z: &[SymMatrix]) -> Result<Blocks> {
            let a = &z[0];
            let mut g = (a - &SymMatrix::from_upper(2, &[1.0, 0.5, 2.0]).unwrap()).scaled(2.0);
            let extra = SymMatrix::diag(&[6.0 * (a[(0, 0)] - 1.0), 0.0]);
            g += &extra;
            Ok(vec![g])
        }
        fn stationarity(&self, g: &[SymMatrix]) -> f64 {
            norm_inf(g)
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let s = LbfgsSettings { max_iters: 200, tol: 1e-12, armijo_c: 1e-4, shrink: 0.5, memory: 8 };
        let out = minimize(&Quad, vec![SymMatrix::zeros(2)], &s).unwrap();
        assert!(out.converged);
        assert!((out.z[0][(0, 1)] - 0.5).abs() < 1e-11);
        assert!((out.z[0][(1, 1)] - 2.0).abs() < 1e-11);
    }
}
