mod common;

use rand::Rng;

use common::*;
use spinvar::functionals::{eval_approx, eval_cs, eval_parisi, FunctionalKind, Side};
use spinvar::optimize::{continuation, SolveOptions};
use spinvar::variation::{
    bound_check, critical_residual, cs_along, fd_directional, grad_cs, grad_parisi, parisi_along, tilde_transform,
    upper_multiplier, Tilde,
};

fn close(an: f64, fd: f64) -> bool {
    (an - fd).abs() <= 1e-6 * an.abs().max(fd.abs()).max(1e-3)
}

#[test]
fn parisi_representers_match_differences() {
    let mut rng = rng(31);
    for _ in 0..40 {
        let n = rng.gen_range(1..=3);
        let r = rng.gen_range(2..=4);
        let qc = random_correlation(&mut rng, n, 0.25);
        let mix = random_mixture_any(&mut rng, n);
        let path = random_path(&mut rng, &qc, r, true);
        let lam = feasible_lambda(&mut rng, &mix, qc.matrix());
        let eps = [0.0, 1e-2][rng.gen_range(0..2)];
        let g = grad_parisi(&lam, &path, &mix, eps).unwrap();
        let c = random_symmetric(&mut rng, n, 1.0);
        let fd = fd_directional(|t| parisi_along(&lam, &path, &mix, eps, None, &c, t), 1e-5).unwrap();
        assert!(close(g.d_lambda.as_ref().unwrap().dot(&c), fd));
        for p in 1..r {
            let fd = fd_directional(|t| parisi_along(&lam, &path, &mix, eps, Some(p), &c, t), 1e-5).unwrap();
            assert!(close(g.d_q[p - 1].dot(&c), fd), "level {p}");
        }
    }
}

#[test]
fn cs_representers_match_differences() {
    let mut rng = rng(32);
    for _ in 0..40 {
        let n = rng.gen_range(1..=3);
        let r = rng.gen_range(2..=4);
        let qc = random_correlation(&mut rng, n, 0.25);
        let mix = random_mixture_any(&mut rng, n);
        let last_one = rng.gen_bool(0.5);
        let path = random_path(&mut rng, &qc, r, last_one);
        let eps = [0.0, 1e-2][rng.gen_range(0..2)];
        let g = grad_cs(&path, &mix, eps).unwrap();
        let c = random_symmetric(&mut rng, n, 1.0);
        for p in 1..r {
            let fd = fd_directional(|t| cs_along(&path, &mix, eps, p, &c, t), 1e-5).unwrap();
            assert!(close(g.d_q[p - 1].dot(&c), fd), "level {p}");
        }
    }
}

#[test]
fn generic_points_are_not_critical() {
    let mut rng = rng(33);
    let qc = random_correlation(&mut rng, 2, 0.25);
    let mix = random_mixture(&mut rng, 2, true, true);
    let path = random_path(&mut rng, &qc, 3, true);
    let lam = feasible_lambda(&mut rng, &mix, qc.matrix());
    assert!(critical_residual(Side::Lower, Some(&lam), &path, &mix, 1e-2).unwrap().max_residual > 1e-3);
    assert!(critical_residual(Side::Upper, None, &path, &mix, 1e-2).unwrap().max_residual > 1e-3);
}

#[test]
fn zero_barrier_collapses_corrections() {
    let mut rng = rng(34);
    for _ in 0..20 {
        let n = rng.gen_range(1..=3);
        let qc = random_correlation(&mut rng, n, 0.25);
        let mix = random_mixture_any(&mut rng, n);
        let path = random_path(&mut rng, &qc, 3, true);
        let lam = upper_multiplier(&path, &mix, 0.0).unwrap();

        let lower = eval_approx(Side::Lower, 0.0, None, &path, &mix).unwrap();
        assert!((lower - eval_cs(&path, &mix).unwrap()).abs() < 1e-12);
        let upper = eval_approx(Side::Upper, 0.0, Some(&lam), &path, &mix).unwrap();
        assert!((upper - eval_parisi(&lam, &path, &mix).unwrap()).abs() < 1e-12);

        for side in [Side::Lower, Side::Upper] {
            let b = bound_check(side, Some(&lam), &path, &mix, 0.0).unwrap();
            assert!(b.slack().abs() < 1e-12, "{side:?}: {}", b.slack());
        }
        match tilde_transform(Side::Lower, None, &path, &mix, 0.0).unwrap() {
            Tilde::Path { path: t, .. } => assert_eq!(t, path),
            other => panic!("{other:?}"),
        }
        match tilde_transform(Side::Upper, Some(&lam), &path, &mix, 0.0).unwrap() {
            Tilde::Multiplier { lambda, .. } => assert_eq!(lambda, lam),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn converged_stages_satisfy_identities_and_bounds() {
    let mut rng = rng(35);
    let qc = random_correlation(&mut rng, 2, 0.25);
    let mix = random_mixture(&mut rng, 2, true, true);
    let opts = SolveOptions { eps_schedule: vec![1e-1, 1e-2, 1e-3], ..SolveOptions::default() };
    let x = [0.0, 0.5, 1.0];
    for kind in [FunctionalKind::Parisi, FunctionalKind::Cs] {
        let res = continuation(kind, &mix, &qc, &x, &opts).unwrap();
        assert!(res.converged());
        for s in &res.stages {
            let side = if kind == FunctionalKind::Parisi { Side::Lower } else { Side::Upper };
            let lam = s.state.lambda.as_ref();
            let rep = critical_residual(side, lam, &s.state.path, &mix, s.eps).unwrap();
            assert!(rep.max_residual <= 1e-6, "{kind:?} eps {}: {}", s.eps, rep.max_residual);
            assert!(rep.identity_gap <= 1e-5 * (1.0 + rep.value.abs()));
            let b = bound_check(side, lam, &s.state.path, &mix, s.eps).unwrap();
            assert!(b.holds, "{kind:?} eps {}: slack {}", s.eps, b.slack());
        }
    }
}
