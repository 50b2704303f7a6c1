//! Acceptance suite: one line per criterion, nonzero exit if any criterion fails.

mod common;

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::*;
use spinvar::continuous::{
    eval_cs_continuous, eval_cs_continuous_cutoff, feasible_box, from_discrete, ContinuousPoint,
};
use spinvar::functionals::{eval_cs, FunctionalKind, Side};
use spinvar::mat_core::{chol_logdet, spectral_floor, sym_inverse, ConstraintMatrix, MixtureSpec, MixtureTerm, SymMatrix};
use spinvar::optimize::{duality_gap, search, GapReport, SolveOptions};
use spinvar::path_model::DiscretePath;
use spinvar::variation::{
    bound_check, critical_residual, cs_along, fd_directional, grad_cs, grad_parisi, parisi_along,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct Instance {
    label: String,
    mix: MixtureSpec,
    qc: ConstraintMatrix,
    report: GapReport,
    secs: f64,
}

fn solve(label: &str, mix: MixtureSpec, qc: ConstraintMatrix) -> Instance {
    let t0 = Instant::now();
    let report = duality_gap(&mix, &qc, &SolveOptions::default()).expect("gap solve");
    Instance { label: label.into(), mix, qc, report, secs: t0.elapsed().as_secs_f64() }
}

/// `2C(q) = log(1-q) + q/(1-q) + β²(1-q²)` on a grid of spacing 1e-4.
fn scalar_grid_min(beta: f64) -> f64 {
    (0..10_000)
        .map(|i| {
            let q = i as f64 * 1e-4;
            0.5 * ((1.0 - q).ln() + q / (1.0 - q) + beta * beta * (1.0 - q * q))
        })
        .fold(f64::INFINITY, f64::min)
}

fn scalar_instances() -> Vec<Instance> {
    [0.3, 1.0].iter().map(|&b| solve(&format!("n=1 beta={b}"), MixtureSpec::pure2(&[b]), ConstraintMatrix::identity(1))).collect()
}

fn vector_instances() -> Vec<Instance> {
    let mut rng = rng(20_240_601);
    (0..5)
        .map(|i| {
            let n = 2 + i % 2;
            let qc = random_correlation(&mut rng, n, 0.2);
            let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.6)).collect();
            let field: Vec<f64> = if i % 2 == 1 { (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect() } else { vec![0.0; n] };
            let mix = MixtureSpec::new(n, vec![MixtureTerm { p: 2, beta }], field).unwrap();
            solve(&format!("instance {i} (n={n})"), mix, qc)
        })
        .collect()
}

fn c1(scalar: &[Instance]) -> Outcome {
    let targets = [0.045, 0.490929];
    let mut pass = true;
    let mut parts = Vec::new();
    for (inst, &target) in scalar.iter().zip(&targets) {
        let r = &inst.report;
        let beta = inst.mix.beta2().unwrap()[0];
        let grid = scalar_grid_min(beta);
        let ok = r.gap <= 1e-4
            && (r.min_parisi - target).abs() <= 1e-4
            && (r.min_cs - target).abs() <= 1e-4
            && (grid - target).abs() <= 1e-4
            && inst.secs <= 10.0;
        pass &= ok;
        parts.push(format!(
            "{}: P={:.7} C={:.7} grid={:.7} gap={:.1e} {:.2}s",
            inst.label, r.min_parisi, r.min_cs, grid, r.gap, inst.secs
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn c2(vector: &[Instance]) -> Outcome {
    let worst = vector.iter().map(|i| i.report.gap).fold(0.0, f64::max);
    let slowest = vector.iter().map(|i| i.secs).fold(0.0, f64::max);
    Outcome::new(
        worst <= 5e-4 && slowest <= 300.0,
        format!("{} instances, worst gap {worst:.2e}, slowest {slowest:.2}s", vector.len()),
    )
}

fn c3() -> Outcome {
    let beta = [0.5, 1.2];
    let field = [0.3, 0.0];
    let opts = SolveOptions { diagonal_only: true, ..SolveOptions::default() };
    let joint_mix = MixtureSpec::pure2(&beta).with_field(&field).unwrap();
    let qc2 = ConstraintMatrix::identity(2);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for kind in [FunctionalKind::Parisi, FunctionalKind::Cs] {
        let joint = search(kind, &joint_mix, &qc2, &opts).unwrap().value();
        let split: f64 = (0..2)
            .map(|i| {
                let m = MixtureSpec::pure2(&[beta[i]]).with_field(&[field[i]]).unwrap();
                search(kind, &m, &ConstraintMatrix::identity(1), &opts).unwrap().value()
            })
            .sum();
        worst = worst.max((joint - split).abs());
        parts.push(format!("{kind:?}: joint {joint:.9} vs split {split:.9}"));
    }
    Outcome::new(worst <= 1e-6, format!("{}; max diff {worst:.1e}", parts.join(", ")))
}

fn c4(all: &[&Instance]) -> Outcome {
    let (mut worst_res, mut worst_id, mut stages, mut skipped) = (0.0f64, 0.0f64, 0, 0);
    for inst in all {
        for s in &inst.report.parisi.best.stages {
            if !s.converged {
                skipped += 1;
                continue;
            }
            let rep = critical_residual(Side::Lower, s.state.lambda.as_ref(), &s.state.path, &inst.mix, s.eps).unwrap();
            worst_res = worst_res.max(rep.max_residual);
            worst_id = worst_id.max(rep.identity_gap / (1.0 + rep.value.abs()));
            stages += 1;
        }
        for s in &inst.report.cs.best.stages {
            if !s.converged {
                skipped += 1;
                continue;
            }
            let rep = critical_residual(Side::Upper, None, &s.state.path, &inst.mix, s.eps).unwrap();
            worst_res = worst_res.max(rep.max_residual);
            worst_id = worst_id.max(rep.identity_gap / (1.0 + rep.value.abs()));
            stages += 1;
        }
    }
    Outcome::new(
        stages > 0 && worst_res <= 1e-6 && worst_id <= 1e-5,
        format!("{stages} converged stages ({skipped} unconverged skipped), max residual {worst_res:.1e}, max scaled identity gap {worst_id:.1e}"),
    )
}

fn c5(all: &[&Instance]) -> Outcome {
    let targets = [1e-1, 1e-2, 1e-3];
    let (mut worst, mut count) = (f64::INFINITY, 0);
    for inst in all {
        let sides = [(Side::Lower, &inst.report.parisi.best.stages), (Side::Upper, &inst.report.cs.best.stages)];
        for (side, stages) in sides {
            for s in stages.iter().filter(|s| s.converged && targets.contains(&s.eps)) {
                let lambda = if side == Side::Lower { s.state.lambda.as_ref() } else { None };
                let b = bound_check(side, lambda, &s.state.path, &inst.mix, s.eps).unwrap();
                worst = worst.min(b.slack());
                count += 1;
            }
        }
    }
    let expected = all.len() * 2 * targets.len();
    Outcome::new(
        count == expected && worst >= -1e-9,
        format!("{count}/{expected} checks, min slack {worst:.2e}"),
    )
}

fn random_setup(rng: &mut ChaCha8Rng) -> (MixtureSpec, ConstraintMatrix, DiscretePath) {
    let n = rng.gen_range(1..=3);
    let r = rng.gen_range(2..=4);
    let mix = random_mixture_any(rng, n);
    let qc = random_correlation(rng, n, 0.2);
    let last_one = rng.gen_bool(0.5);
    let path = random_path(rng, &qc, r, last_one);
    (mix, qc, path)
}

fn relative(an: f64, fd: f64) -> f64 {
    (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8)
}

fn c6() -> Outcome {
    let mut rng = rng(6);
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, parisi, eps) in [("parisi", true, 0.0), ("parisi_eps", true, 0.05), ("cs", false, 0.0), ("cs_eps", false, 0.05)] {
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let (mix, qc, path) = random_setup(&mut rng);
            let c = random_symmetric(&mut rng, qc.dim(), 1.0);
            let (an, fd) = if parisi {
                let lambda = feasible_lambda(&mut rng, &mix, qc.matrix());
                let g = grad_parisi(&lambda, &path, &mix, eps).unwrap();
                let level = rng.gen_range(0..path.r());
                let level = if level == 0 { None } else { Some(level) };
                let an = match level {
                    None => g.d_lambda.as_ref().unwrap().dot(&c),
                    Some(p) => g.d_q[p - 1].dot(&c),
                };
                let fd = fd_directional(|t| parisi_along(&lambda, &path, &mix, eps, level, &c, t), 1e-5).unwrap();
                (an, fd)
            } else {
                let g = grad_cs(&path, &mix, eps).unwrap();
                let level = rng.gen_range(1..path.r());
                let fd = fd_directional(|t| cs_along(&path, &mix, eps, level, &c, t), 1e-5).unwrap();
                (g.d_q[level - 1].dot(&c), fd)
            };
            worst = worst.max(relative(an, fd));
        }
        pass &= worst <= 1e-6;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Outcome::new(pass, format!("worst relative error: {}", parts.join(", ")))
}

fn c7() -> Outcome {
    let mut rng = rng(7);
    let (mut worst_rt, mut worst_inv): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let n = rng.gen_range(1..=3);
        let r = rng.gen_range(2..=5);
        let mix = random_mixture_any(&mut rng, n);
        let qc = random_correlation(&mut rng, n, 0.2);
        let path = random_path(&mut rng, &qc, r, true);
        let p = from_discrete(&path).unwrap();
        let cont = eval_cs_continuous(&p, &mix).unwrap();
        worst_rt = worst_rt.max((cont - eval_cs(&path, &mix).unwrap()).abs());
        let t_hat = p.t_x() + rng.gen_range(0.0..0.9) * (p.end() - p.t_x());
        worst_inv = worst_inv.max((eval_cs_continuous_cutoff(&p, &mix, t_hat).unwrap() - cont).abs());
    }
    Outcome::new(
        worst_rt <= 1e-10 && worst_inv <= 1e-10,
        format!("100 paths, max round-trip diff {worst_rt:.1e}, max cutoff diff {worst_inv:.1e}"),
    )
}

fn row_sum_norm(c: &SymMatrix) -> f64 {
    (0..c.dim()).map(|i| (0..c.dim()).map(|j| c[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn c8() -> Outcome {
    let mut rng = rng(8);
    let mut violations = [0usize; 6];
    for _ in 0..200 {
        let n = rng.gen_range(1..=4);
        let p4 = rng.gen_bool(0.5);
        let mix = random_mixture(&mut rng, n, p4, false);

        // Log-det concavity along a segment that stays PD.
        let a = random_pd(&mut rng, n, 0.1);
        let b = random_pd(&mut rng, n, 0.1);
        let c = &b - &a;
        let tangent = chol_logdet(&a).unwrap() + sym_inverse(&a).unwrap().dot(&c);
        if tangent < chol_logdet(&b).unwrap() - 1e-10 {
            violations[0] += 1;
        }

        // ξ-convexity tangent bound.
        let a = random_symmetric(&mut rng, n, 1.0);
        let c = random_symmetric(&mut rng, n, 1.0);
        let lhs = mix.xi(&a).sum() + mix.xi_prime(&a).dot(&c);
        let rhs = mix.xi(&(&a + &c)).sum();
        if lhs > rhs + 1e-10 * (1.0 + rhs.abs()) {
            violations[1] += 1;
        }

        // AM-GM determinant bound.
        let a = random_pd(&mut rng, n, 0.05);
        if chol_logdet(&a).unwrap() > n as f64 * (a.trace() / n as f64).ln() + 1e-12 {
            violations[2] += 1;
        }

        // PSD trace monotonicity.
        let (a, c) = (random_psd(&mut rng, n), random_psd(&mut rng, n));
        if a.dot(&c) < -1e-12 * (1.0 + a.norm_inf() * c.norm_inf()) {
            violations[3] += 1;
        }

        // Admissible perturbation radius with the induced infinity norm.
        let a = random_pd(&mut rng, n, 0.05);
        let c = random_symmetric(&mut rng, n, 2.0);
        let eps = 0.999 * spectral_floor(&a) / row_sum_norm(&c);
        if !(&a + &c.scaled(eps)).is_pd() || !(&a - &c.scaled(eps)).is_pd() {
            violations[4] += 1;
        }

        // Gaps of ξ' are PD for a PD gap with positive quadratic coefficients.
        let lo = random_pd(&mut rng, n, 0.05);
        let hi = &lo + &random_pd(&mut rng, n, 0.05);
        if spectral_floor(&(&mix.xi_prime(&hi) - &mix.xi_prime(&lo))) <= 0.0 {
            violations[5] += 1;
        }
    }
    let names = ["logdet concavity", "xi convexity", "AM-GM", "trace monotonicity", "perturbation radius", "xi' gap PD"];
    let detail: Vec<String> = names.iter().zip(violations).map(|(n, v)| format!("{n} {v}/200")).collect();
    Outcome::new(violations.iter().all(|&v| v == 0), format!("violations: {}", detail.join(", ")))
}

fn c9() -> Outcome {
    let mut rng = rng(9);
    let (m1, m2) = (MixtureSpec::pure2(&[1.0]), MixtureSpec::pure2(&[1.1]));
    let delta = m1.temperature_distance(&m2);
    let qc = ConstraintMatrix::identity(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let r = rng.gen_range(2..=5);
        let last_one = rng.gen_bool(0.5);
        let path = random_path(&mut rng, &qc, r, last_one);
        worst = worst.max((eval_cs(&path, &m1).unwrap() - eval_cs(&path, &m2).unwrap()).abs());
    }
    Outcome::new(
        (delta - 0.21).abs() < 1e-12 && worst <= 2.0 * 0.21,
        format!("delta {delta:.4}, max |dC| {worst:.4} over 50 paths (bound 0.42)"),
    )
}

fn top_atom(p: &ContinuousPoint) -> (f64, f64) {
    let t = p.t_x();
    let inv = sym_inverse(&(p.phi.constraint() - &p.phi.value(t))).unwrap();
    (t, inv.norm_inf())
}

fn c10(all: &[&Instance]) -> Outcome {
    let mut pass = true;
    let mut checked = 0;
    let (mut t_margin, mut l_margin) = (f64::INFINITY, f64::INFINITY);
    for inst in all {
        let bx = feasible_box(&inst.mix, &inst.qc).unwrap();
        for path in [inst.report.argmin_parisi().1, inst.report.argmin_cs()] {
            let p = from_discrete(path).unwrap();
            let (t, l) = top_atom(&p);
            t_margin = t_margin.min(bx.t_max - t);
            l_margin = l_margin.min(bx.l_max - l);
            pass &= bx.contains(&p);
            checked += 1;
        }
    }
    let spot = feasible_box(&MixtureSpec::pure2(&[1.0]), &ConstraintMatrix::identity(1)).unwrap();
    let spot_ok = (spot.t_max - (1.0 - (-3.0f64).exp())).abs() < 1e-12 && (spot.l_max - 3.0f64.exp()).abs() < 1e-12;
    Outcome::new(
        pass && spot_ok,
        format!(
            "{checked} minimizers, min T margin {t_margin:.3}, min inverse-norm margin {l_margin:.3}; spot T={:.6} L={:.6}",
            spot.t_max, spot.l_max
        ),
    )
}

fn main() {
    let start = Instant::now();
    let scalar = scalar_instances();
    let vector = vector_instances();
    let all: Vec<&Instance> = scalar.iter().chain(vector.iter()).collect();

    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "scalar duality gap", c1(&scalar)),
        (2, "vector duality gap", c2(&vector)),
        (3, "diagonal separability", c3()),
        (4, "critical-point identities", c4(&all)),
        (5, "one-sided bounds", c5(&all)),
        (6, "gradient oracle", c6()),
        (7, "discrete-continuous agreement", c7()),
        (8, "matrix inequality battery", c8()),
        (9, "temperature continuity", c9()),
        (10, "compactness bounds", c10(&all)),
    ];

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed in {:.1}s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
