use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::record::{LevelRow, ResultRecord, Value};
use super::spec_file::ProblemSpec;
use super::RunFlags;
use crate::continuous::{
    eval_cs_continuous, eval_cs_continuous_cutoff, feasible_box, from_discrete, lipschitz_probe, support_check,
    ContinuousPoint,
};
use crate::error::{Result, SpinError};
use crate::functionals::{eval_barrier, eval_cs, eval_parisi, FunctionalKind, Side};
use crate::mat_core::{spectral_floor, sym_inverse, SymMatrix};
use crate::optimize::{continuation, duality_gap, initial_state, search, ContinuationResult};
use crate::path_model::DiscretePath;
use crate::variation::{bound_check, critical_residual, cs_along, fd_directional, grad_cs, grad_parisi, parisi_along};

/// Critical-point tolerance on representers.
const CHECK_TOL: f64 = 1e-6;
/// Relative agreement demanded of the critical-point identities.
const IDENTITY_TOL: f64 = 1e-5;
const ROUND_TRIP_TOL: f64 = 1e-10;
const FD_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;

fn side_name(kind: FunctionalKind) -> &'static str {
    match kind {
        FunctionalKind::Parisi => "parisi",
        FunctionalKind::Cs => "cs",
    }
}

/// Continuation at the spec's weights when a path is given, otherwise the full search.
fn solve(spec: &ProblemSpec, kind: FunctionalKind) -> Result<ContinuationResult> {
    match &spec.path {
        Some((p, _)) => continuation(kind, &spec.mix, &spec.constraint, p.x(), &spec.options),
        None => Ok(search(kind, &spec.mix, &spec.constraint, &spec.options)?.best),
    }
}

fn report_side(rec: &mut ResultRecord, kind: FunctionalKind, res: &ContinuationResult) {
    let s = side_name(kind);
    let last = res.last();
    rec.num(&format!("{s}_value"), res.value_at_eps_min);
    rec.num(&format!("{s}_value_extrapolated"), res.value_extrapolated);
    rec.num(&format!("{s}_eps_min"), last.eps);
    rec.num(&format!("{s}_grad_norm"), last.grad_norm);
    rec.push(&format!("{s}_r"), Value::Int(last.state.path.r() as i64));
    rec.push(&format!("{s}_weights"), Value::Nums(last.state.path.x().to_vec()));
    rec.push(&format!("{s}_converged"), Value::Bool(res.converged()));
    rec.push(&format!("{s}_stage_values"), Value::Nums(res.stages.iter().map(|st| st.base_value).collect()));
    rec.levels.extend(LevelRow::from_path(s, &last.state.path, last.state.lambda.as_ref()));
    rec.traces.push((s.to_string(), res.trace()));
}

pub(super) fn eval(spec: &ProblemSpec, rec: &mut ResultRecord) -> Result<bool> {
    let (path, lambda) = spec.path.as_ref().ok_or_else(|| SpinError::Invalid("eval needs a [path] table".into()))?;
    rec.num("cs_value", eval_cs(path, &spec.mix)?);
    rec.num("barrier_value", eval_barrier(path)?);
    if let Some(l) = lambda {
        rec.num("parisi_value", eval_parisi(l, path, &spec.mix)?);
    }
    rec.levels.extend(LevelRow::from_path("input", path, lambda.as_ref()));
    Ok(true)
}

pub(super) fn minimize(spec: &ProblemSpec, rec: &mut ResultRecord) -> Result<bool> {
    let p = solve(spec, FunctionalKind::Parisi)?;
    let c = solve(spec, FunctionalKind::Cs)?;
    report_side(rec, FunctionalKind::Parisi, &p);
    report_side(rec, FunctionalKind::Cs, &c);
    Ok(p.converged() && c.converged())
}

pub(super) fn gap(spec: &ProblemSpec, rec: &mut ResultRecord) -> Result<bool> {
    let g = duality_gap(&spec.mix, &spec.constraint, &spec.options)?;
    rec.num("min_parisi", g.min_parisi);
    rec.num("min_cs", g.min_cs);
    rec.num("gap", g.gap);
    rec.num("min_parisi_extrapolated", g.min_parisi_extrapolated);
    rec.num("min_cs_extrapolated", g.min_cs_extrapolated);
    rec.num("delta_band", g.delta_band.unwrap_or(0.0));
    rec.push("beta2_shifted", Value::Bool(g.delta_band.is_some()));
    report_side(rec, FunctionalKind::Parisi, &g.parisi.best);
    report_side(rec, FunctionalKind::Cs, &g.cs.best);
    Ok(g.converged)
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    SymMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

fn fd_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / analytic.abs().max(1.0)
}

/// Largest finite-difference disagreement over `samples` random directions at the start point.
fn fd_battery(spec: &ProblemSpec, kind: FunctionalKind, x: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let state = initial_state(kind, &spec.mix, &spec.constraint, x)?;
    let (mix, eps) = (&spec.mix, spec.options.eps_schedule[0]);
    let path = &state.path;
    let n = spec.n();
    let r = path.r();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let c = random_symmetric(rng, n);
        let err = match &state.lambda {
            Some(l) => {
                let g = grad_parisi(l, path, mix, eps)?;
                let level = rng.gen_range(0..r);
                let (lv, rep) = if level == 0 {
                    (None, g.d_lambda.clone().expect("Parisi side has a multiplier block"))
                } else {
                    (Some(level), g.d_q[level - 1].clone())
                };
                let fd = fd_directional(|t| parisi_along(l, path, mix, eps, lv, &c, t), FD_STEP)?;
                fd_error(fd, rep.dot(&c))
            }
            None => {
                let g = grad_cs(path, mix, eps)?;
                let level = rng.gen_range(1..r);
                let fd = fd_directional(|t| cs_along(path, mix, eps, level, &c, t), FD_STEP)?;
                fd_error(fd, g.d_q[level - 1].dot(&c))
            }
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

fn cutoff_point(p: &ContinuousPoint) -> f64 {
    let tx = p.t_x();
    tx + 0.5 * (p.end() - tx)
}

pub(super) fn verify(spec: &ProblemSpec, flags: &RunFlags, rec: &mut ResultRecord) -> Result<bool> {
    let mix = &spec.mix;
    let p = solve(spec, FunctionalKind::Parisi)?;
    let c = solve(spec, FunctionalKind::Cs)?;
    let (pl, cl) = (p.last(), c.last());
    let lambda = pl.state.lambda.as_ref().expect("Parisi side has a multiplier");

    let lower = critical_residual(Side::Lower, Some(lambda), &pl.state.path, mix, pl.eps)?;
    rec.check("parisi_critical_residual", lower.max_residual, CHECK_TOL, lower.max_residual <= CHECK_TOL);
    let tol = IDENTITY_TOL * (1.0 + lower.value.abs());
    rec.check("parisi_identity_gap", lower.identity_gap, tol, lower.identity_gap <= tol);
    let upper = critical_residual(Side::Upper, None, &cl.state.path, mix, cl.eps)?;
    rec.check("cs_critical_residual", upper.max_residual, CHECK_TOL, upper.max_residual <= CHECK_TOL);
    let tol = IDENTITY_TOL * (1.0 + upper.value.abs());
    rec.check("cs_identity_gap", upper.identity_gap, tol, upper.identity_gap <= tol);

    let bl = bound_check(Side::Lower, Some(lambda), &pl.state.path, mix, pl.eps)?;
    rec.check("lower_bound_slack", bl.slack(), -1e-9, bl.holds);
    let bu = bound_check(Side::Upper, None, &cl.state.path, mix, cl.eps)?;
    rec.check("upper_bound_slack", bu.slack(), -1e-9, bu.holds);

    let gap = (p.value_at_eps_min - c.value_at_eps_min).abs();
    rec.check("value_agreement", gap, 5e-4, gap <= 5e-4);

    let pt = from_discrete(&cl.state.path)?;
    let cont = eval_cs_continuous(&pt, mix)?;
    let disc = eval_cs(&cl.state.path, mix)?;
    rec.check("continuous_round_trip", (cont - disc).abs(), ROUND_TRIP_TOL, (cont - disc).abs() <= ROUND_TRIP_TOL);
    let cut = eval_cs_continuous_cutoff(&pt, mix, cutoff_point(&pt))?;
    rec.check("cutoff_invariance", (cut - cont).abs(), ROUND_TRIP_TOL, (cut - cont).abs() <= ROUND_TRIP_TOL);

    let bx = feasible_box(mix, &spec.constraint)?;
    rec.check("top_support_bound", pt.t_x(), bx.t_max, pt.t_x() <= bx.t_max);
    let inv_norm = sym_inverse(&(pt.phi.constraint() - &pt.phi.value(pt.t_x())))?.norm_inf();
    rec.check("inverse_norm_bound", inv_norm, bx.l_max, inv_norm <= bx.l_max);
    let sup = support_check(&pt, mix)?;
    let worst_margin = sup.atoms.iter().map(|a| a.margin).fold(f64::INFINITY, f64::min);
    rec.check("support_condition", worst_margin, 0.0, sup.ok());

    let mut rng = ChaCha8Rng::seed_from_u64(spec.options.seed);
    let samples = flags.samples.max(1);
    let fp = fd_battery(spec, FunctionalKind::Parisi, pl.state.path.x(), samples, &mut rng)?;
    rec.check("parisi_gradient_fd", fp, FD_TOL, fp <= FD_TOL);
    let fc = fd_battery(spec, FunctionalKind::Cs, cl.state.path.x(), samples, &mut rng)?;
    rec.check("cs_gradient_fd", fc, FD_TOL, fc <= FD_TOL);

    rec.push("all_passed", Value::Bool(rec.all_checks_pass()));
    report_side(rec, FunctionalKind::Parisi, &p);
    report_side(rec, FunctionalKind::Cs, &c);
    Ok(p.converged() && c.converged())
}

/// The spec's explicit path when its last weight is one, otherwise the Crisanti–Sommers minimizer.
fn continuous_source(spec: &ProblemSpec) -> Result<(DiscretePath, bool)> {
    match &spec.path {
        Some((p, _)) if p.is_last_weight_one() => Ok((p.clone(), true)),
        _ => {
            let c = solve(spec, FunctionalKind::Cs)?;
            let converged = c.converged();
            Ok((c.last().state.path.clone(), converged))
        }
    }
}

pub(super) fn continuous(spec: &ProblemSpec, rec: &mut ResultRecord) -> Result<bool> {
    let mix = &spec.mix;
    let (path, converged) = continuous_source(spec)?;
    let pt = from_discrete(&path)?;
    let cont = eval_cs_continuous(&pt, mix)?;
    let disc = eval_cs(&path, mix)?;
    rec.num("cs_continuous", cont);
    rec.num("cs_discrete", disc);
    rec.num("round_trip_error", (cont - disc).abs());
    rec.num("t_x", pt.t_x());
    rec.push("knot_times", Value::Nums(pt.phi.knots().iter().map(|k| k.0).collect()));
    let bx = feasible_box(mix, &spec.constraint)?;
    rec.num("t_hat", bx.t_max);
    rec.num("l_hat", bx.l_max);
    let inv_norm = sym_inverse(&(pt.phi.constraint() - &pt.phi.value(pt.t_x())))?.norm_inf();
    rec.num("inverse_norm_at_t_x", inv_norm);
    rec.push("in_feasible_box", Value::Bool(bx.contains(&pt)));
    let sup = support_check(&pt, mix)?;
    rec.push("support_ok", Value::Bool(sup.ok()));
    rec.push("support_points", Value::Nums(sup.atoms.iter().map(|a| a.t).collect()));
    rec.push("support_margins", Value::Nums(sup.atoms.iter().map(|a| a.margin).collect()));
    let psi_floor = sup.psi.iter().map(|(_, m)| spectral_floor(m)).fold(f64::INFINITY, f64::min);
    rec.num("psi_min_eigenvalue", psi_floor);
    rec.levels.extend(LevelRow::from_path("cs", &path, None));
    Ok(converged)
}

/// Moves one free level toward a neighbour by a random fraction of the gap, which keeps every
/// increment PSD.
fn nudge(path: &DiscretePath, rng: &mut ChaCha8Rng, scale: f64) -> Result<DiscretePath> {
    let r = path.r();
    let k = rng.gen_range(1..r);
    let s = scale * rng.gen_range(0.1..1.0);
    let target = if rng.gen_bool(0.5) { path.q(k + 1) } else { path.q(k - 1) };
    let mut free = path.free().to_vec();
    free[k - 1] = &free[k - 1].scaled(1.0 - s) + &target.scaled(s);
    path.with_free(free)
}

pub(super) fn probe(spec: &ProblemSpec, flags: &RunFlags, rec: &mut ResultRecord) -> Result<bool> {
    let mix = &spec.mix;
    let (base, converged) = continuous_source(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.options.seed);
    let bx = feasible_box(mix, &spec.constraint)?;
    let base_pt = from_discrete(&base)?;
    let mut pairs = Vec::with_capacity(flags.samples);
    for i in 0..flags.samples {
        if base.r() < 2 {
            break;
        }
        let scale = 10f64.powf(-1.0 - 2.0 * (i as f64 / flags.samples.max(1) as f64));
        let moved = nudge(&base, &mut rng, scale)?;
        if let Ok(pt) = from_discrete(&moved) {
            pairs.push((base_pt.clone(), pt));
        }
    }
    let pr = lipschitz_probe(&pairs, mix, &bx)?;
    rec.num("empirical_modulus", pr.empirical_modulus);
    rec.num("bound", pr.bound);
    rec.push("pairs_used", Value::Int(pr.used as i64));
    rec.push("pairs_skipped", Value::Int(pr.skipped as i64));
    rec.push("within_bound", Value::Bool(pr.empirical_modulus <= pr.bound));
    rec.levels.extend(LevelRow::from_path("cs", &base, None));
    Ok(converged)
}
