//! Barrier minimization at fixed weights, continuation in the barrier weight, the search over
//! weights and level counts, and the two-sided gap certificate.

mod lbfgs;
mod search;

pub use search::{duality_gap, search, GapReport, SearchResult};

use crate::error::{Result, SpinError};
use crate::functionals::{eval_barrier, eval_cs, eval_parisi, eval_perturbed, FunctionalKind, Point};
use crate::mat_core::{sym_inverse, ConstraintMatrix, MixtureSpec, SymMatrix};
use crate::path_model::{lambda_sequence, DiscretePath};
use crate::variation::{grad_cs, grad_parisi};
use lbfgs::{BlockObjective, Blocks, LbfgsSettings};

/// Solver configuration. Every field is settable from the spec file and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub eps_schedule: Vec<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    /// Weight grid resolution: candidates are multiples of `1 / x_grid`.
    pub x_grid: usize,
    pub r_max: usize,
    pub seed: u64,
    pub beta2_delta: f64,
    /// Halvings of the grid spacing around the best weights.
    pub refine_levels: usize,
    /// Restrict paths and multipliers to diagonal matrices.
    pub diagonal_only: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            eps_schedule: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            max_iters: 5000,
            grad_tol: 1e-10,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            x_grid: 8,
            r_max: 3,
            seed: 0,
            beta2_delta: 1e-4,
            refine_levels: 2,
            diagonal_only: false,
        }
    }
}

impl SolveOptions {
    /// Lists every violated constraint.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.eps_schedule.is_empty() {
            errs.push("eps_schedule must not be empty".to_string());
        }
        if self.eps_schedule.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            errs.push("eps_schedule entries must be positive".to_string());
        }
        if self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            errs.push("eps_schedule must be strictly decreasing".to_string());
        }
        if self.max_iters == 0 {
            errs.push("max_iters must be positive".to_string());
        }
        if !(self.grad_tol > 0.0) {
            errs.push("grad_tol must be positive".to_string());
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            errs.push("armijo_c must lie in (0, 1)".to_string());
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            errs.push("armijo_shrink must lie in (0, 1)".to_string());
        }
        if self.x_grid < 2 {
            errs.push("x_grid must be at least 2".to_string());
        }
        if self.r_max < 2 {
            errs.push("r_max must be at least 2".to_string());
        }
        if !(self.beta2_delta >= 0.0 && self.beta2_delta.is_finite()) {
            errs.push("beta2_delta must be nonnegative".to_string());
        }
        errs
    }

    fn lbfgs(&self) -> LbfgsSettings {
        LbfgsSettings {
            max_iters: self.max_iters,
            tol: self.grad_tol,
            armijo_c: self.armijo_c,
            shrink: self.armijo_shrink,
            memory: 12,
        }
    }
}

/// Minimizer state: the path and, on the Parisi side, the multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub lambda: Option<SymMatrix>,
    pub path: DiscretePath,
}

impl SolverState {
    pub fn point(&self) -> Point<'_> {
        match &self.lambda {
            Some(l) => Point::Parisi { lambda: l, path: &self.path },
            None => Point::Cs { path: &self.path },
        }
    }

    /// Functional value without the barrier.
    pub fn base_value(&self, mix: &MixtureSpec) -> Result<f64> {
        match &self.lambda {
            Some(l) => eval_parisi(l, &self.path, mix),
            None => eval_cs(&self.path, mix),
        }
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub stage: usize,
    pub eps: f64,
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub min_increment_eig: f64,
}

/// Result of one barrier minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSolution {
    pub state: SolverState,
    pub eps: f64,
    /// Perturbed value.
    pub value: f64,
    /// Value with the barrier stripped.
    pub base_value: f64,
    /// Largest representer entry at the returned point.
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

struct FixedObjective<'a> {
    kind: FunctionalKind,
    mix: &'a MixtureSpec,
    x: &'a [f64],
    q: &'a SymMatrix,
    eps: f64,
    diagonal: bool,
}

impl FixedObjective<'_> {
    fn split<'z>(&self, z: &'z [SymMatrix]) -> Result<(Option<&'z SymMatrix>, DiscretePath)> {
        let (lambda, free) = match self.kind {
            FunctionalKind::Parisi => (Some(&z[0]), &z[1..]),
            FunctionalKind::Cs => (None, z),
        };
        Ok((lambda, DiscretePath::new(self.x.to_vec(), free.to_vec(), self.q)?))
    }
}

impl BlockObjective for FixedObjective<'_> {
    fn value(&self, z: &[SymMatrix]) -> Result<f64> {
        let (lambda, path) = self.split(z)?;
        let point = match lambda {
            Some(l) => Point::Parisi { lambda: l, path: &path },
            None => Point::Cs { path: &path },
        };
        eval_perturbed(point, self.mix, self.eps)
    }

    fn gradient(&self, z: &[SymMatrix]) -> Result<Blocks> {
        let (lambda, path) = self.split(z)?;
        let g = match lambda {
            Some(l) => grad_parisi(l, &path, self.mix, self.eps)?,
            None => grad_cs(&path, self.mix, self.eps)?,
        };
        // Representers are twice the Frobenius gradient.
        Ok(g.d_lambda.into_iter().chain(g.d_q).map(|m| m.scaled(0.5)).collect())
    }

    fn stationarity(&self, g: &[SymMatrix]) -> f64 {
        2.0 * lbfgs::norm_inf(g)
    }

    fn project(&self, g: &mut Blocks) {
        if self.diagonal {
            g.iter_mut().for_each(|m| *m = m.diagonal_part());
        }
    }

    fn diagnostic(&self, z: &[SymMatrix]) -> f64 {
        self.split(z).map_or(f64::NAN, |(_, path)| path.min_increment_eig())
    }
}

fn check_weights(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(SpinError::Invalid("the solver needs r >= 2".into()));
    }
    if x[0] != 0.0 {
        return Err(SpinError::Invalid("first weight must be zero".into()));
    }
    if x[x.len() - 1] != 1.0 {
        return Err(SpinError::Invalid("the solver pins the last weight to one".into()));
    }
    for p in 1..x.len() {
        if !(x[p] > x[p - 1]) {
            return Err(SpinError::NonStrictWeights(p));
        }
    }
    Ok(())
}

/// Deterministic start: equal-spaced levels and, on the Parisi side, `Λ = Q⁻¹ + ξ'(Q)` doubled
/// until the first multiplier level is positive definite.
pub fn initial_state(kind: FunctionalKind, mix: &MixtureSpec, qc: &ConstraintMatrix, x: &[f64]) -> Result<SolverState> {
    check_weights(x)?;
    let path = DiscretePath::equal_spaced(x.to_vec(), qc.matrix());
    let lambda = match kind {
        FunctionalKind::Cs => None,
        FunctionalKind::Parisi => {
            let mut l = &sym_inverse(qc.matrix())? + &mix.xi_prime(qc.matrix());
            let mut found = None;
            for _ in 0..64 {
                if lambda_sequence(&l, &path, mix).is_ok() {
                    found = Some(l.clone());
                    break;
                }
                l = l.scaled(2.0);
            }
            Some(found.ok_or(SpinError::NoFeasibleStart)?)
        }
    };
    Ok(SolverState { lambda, path })
}

/// Minimizes the perturbed functional at fixed weights starting from `start`.
pub fn minimize_from(
    kind: FunctionalKind,
    mix: &MixtureSpec,
    start: &SolverState,
    eps: f64,
    opts: &SolveOptions,
) -> Result<FixedSolution> {
    let x = start.path.x().to_vec();
    check_weights(&x)?;
    let q = start.path.constraint().clone();
    let obj = FixedObjective { kind, mix, x: &x, q: &q, eps, diagonal: opts.diagonal_only };
    let mut z0: Blocks = Vec::new();
    if kind == FunctionalKind::Parisi {
        z0.push(start.lambda.clone().ok_or_else(|| SpinError::Invalid("Parisi start needs a multiplier".into()))?);
    }
    z0.extend(start.path.free().iter().cloned());
    if obj.value(&z0).is_err() {
        return Err(SpinError::NoFeasibleStart);
    }
    let out = lbfgs::minimize(&obj, z0, &opts.lbfgs())?;
    let (lambda, path) = obj.split(&out.z)?;
    let state = SolverState { lambda: lambda.cloned(), path };
    let base_value = out.value - eps * eval_barrier(&state.path)?;
    let trace = out
        .history
        .iter()
        .map(|h| TraceRow {
            stage: 0,
            eps,
            iter: h.iter,
            value: h.value,
            grad_norm: h.stationarity,
            min_increment_eig: h.diagnostic,
        })
        .collect();
    Ok(FixedSolution {
        state,
        eps,
        value: out.value,
        base_value,
        grad_norm: out.stationarity,
        iters: out.iters,
        converged: out.converged,
        trace,
    })
}

/// Minimizes the perturbed functional at fixed `(r, x, eps)` from the deterministic start.
pub fn minimize_fixed(
    kind: FunctionalKind,
    mix: &MixtureSpec,
    qc: &ConstraintMatrix,
    x: &[f64],
    eps: f64,
    opts: &SolveOptions,
) -> Result<FixedSolution> {
    let start = initial_state(kind, mix, qc, x)?;
    minimize_from(kind, mix, &start, eps, opts)
}

/// Output of a continuation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationResult {
    pub kind: FunctionalKind,
    /// One converged (or flagged) minimizer per stage, in schedule order.
    pub stages: Vec<FixedSolution>,
    /// Base value at the last stage.
    pub value_at_eps_min: f64,
    /// Linear extrapolation of the last two stage values to zero barrier weight.
    pub value_extrapolated: f64,
}

impl ContinuationResult {
    pub fn last(&self) -> &FixedSolution {
        self.stages.last().expect("at least one stage")
    }

    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.converged)
    }

    pub fn trace(&self) -> Vec<TraceRow> {
        self.stages.iter().flat_map(|s| s.trace.iter().cloned()).collect()
    }
}

/// Runs the barrier schedule with warm starts.
pub fn continuation(
    kind: FunctionalKind,
    mix: &MixtureSpec,
    qc: &ConstraintMatrix,
    x: &[f64],
    opts: &SolveOptions,
) -> Result<ContinuationResult> {
    let mut state = initial_state(kind, mix, qc, x)?;
    let mut stages: Vec<FixedSolution> = Vec::with_capacity(opts.eps_schedule.len());
    for (i, &eps) in opts.eps_schedule.iter().enumerate() {
        let mut sol = minimize_from(kind, mix, &state, eps, opts)
            .map_err(|e| SpinError::AtStage { stage: i, eps, source: Box::new(e) })?;
        sol.trace.iter_mut().for_each(|t| t.stage = i);
        state = sol.state.clone();
        stages.push(sol);
    }
    let value_at_eps_min = stages.last().expect("nonempty schedule").base_value;
    let value_extrapolated = match stages.len() {
        0 | 1 => value_at_eps_min,
        k => {
            let (a, b) = (&stages[k - 2], &stages[k - 1]);
            b.base_value - (a.base_value - b.base_value) * b.eps / (a.eps - b.eps)
        }
    };
    Ok(ContinuationResult { kind, stages, value_at_eps_min, value_extrapolated })
}
