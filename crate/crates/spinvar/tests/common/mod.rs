#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spinvar::mat_core::{ConstraintMatrix, MixtureSpec, MixtureTerm, SymMatrix};
use spinvar::path_model::DiscretePath;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> SymMatrix {
    SymMatrix::from_fn(n, |_, _| scale * rng.gen_range(-1.0..1.0))
}

/// `G Gᵀ / n + floor·I` with Gaussian-ish `G`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let m = &g * g.transpose() / n as f64;
    &SymMatrix::symmetrized(&m) + &SymMatrix::identity(n).scaled(floor)
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let k = rng.gen_range(1..=n);
    let g = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
    SymMatrix::symmetrized(&(&g * g.transpose()))
}

/// Random correlation matrix with smallest eigenvalue at least `floor`.
pub fn random_correlation(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> ConstraintMatrix {
    loop {
        let a = random_pd(rng, n, 0.2);
        let d: Vec<f64> = (0..n).map(|i| a[(i, i)].sqrt()).collect();
        let c = SymMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { a[(i, j)] / (d[i] * d[j]) });
        if spinvar::mat_core::spectral_floor(&c) > floor {
            return ConstraintMatrix::new(c).expect("valid correlation matrix");
        }
    }
}

fn sym_power(a: &SymMatrix, p: f64) -> SymMatrix {
    let e = a.as_matrix().clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).powf(p)));
    SymMatrix::symmetrized(&(&e.eigenvectors * d * e.eigenvectors.transpose()))
}

/// Weights `0 = x_0 < … < x_{r-1}`, last one pinned to 1 when `last_one`.
pub fn random_weights(rng: &mut ChaCha8Rng, r: usize, last_one: bool) -> Vec<f64> {
    let mut x: Vec<f64> = (1..r).map(|_| rng.gen_range(0.05..0.95)).collect();
    x.sort_by(f64::total_cmp);
    x.dedup();
    while x.len() < r - 1 {
        let v = rng.gen_range(0.05..0.95);
        if !x.contains(&v) {
            x.push(v);
            x.sort_by(f64::total_cmp);
        }
    }
    x.insert(0, 0.0);
    if last_one && r > 1 {
        x[r - 1] = 1.0;
    }
    x
}

/// Monotone chain to `Q` with PD increments `Q^{1/2} S^{-1/2} M_k S^{-1/2} Q^{1/2}`.
pub fn random_levels(rng: &mut ChaCha8Rng, q: &SymMatrix, r: usize) -> Vec<SymMatrix> {
    let n = q.dim();
    let ms: Vec<SymMatrix> = (0..r).map(|_| random_pd(rng, n, 0.05)).collect();
    let s = ms.iter().fold(SymMatrix::zeros(n), |acc, m| &acc + m);
    let s_half_inv = sym_power(&s, -0.5);
    let q_half = sym_power(q, 0.5);
    let tm = q_half.as_matrix() * s_half_inv.as_matrix();
    let mut acc = SymMatrix::zeros(n);
    let mut levels = Vec::with_capacity(r - 1);
    for m in ms.iter().take(r - 1) {
        acc += &SymMatrix::symmetrized(&(&tm * m.as_matrix() * tm.transpose()));
        levels.push(acc.clone());
    }
    levels
}

pub fn random_path(rng: &mut ChaCha8Rng, q: &ConstraintMatrix, r: usize, last_one: bool) -> DiscretePath {
    let x = random_weights(rng, r, last_one);
    let levels = random_levels(rng, q.matrix(), r);
    DiscretePath::new(x, levels, q.matrix()).expect("random path is valid")
}

/// Pure 2-spin plus optionally a 4-spin term and a field.
pub fn random_mixture(rng: &mut ChaCha8Rng, n: usize, with_p4: bool, with_field: bool) -> MixtureSpec {
    let mut terms = vec![MixtureTerm { p: 2, beta: (0..n).map(|_| rng.gen_range(0.2..1.2)).collect() }];
    if with_p4 {
        terms.push(MixtureTerm { p: 4, beta: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect() });
    }
    let field = if with_field { (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect() } else { vec![0.0; n] };
    MixtureSpec::new(n, terms, field).expect("valid mixture")
}

/// A multiplier whose first level is positive definite: `ξ'(Q) + M` with `M` PD.
pub fn feasible_lambda(rng: &mut ChaCha8Rng, mix: &MixtureSpec, q: &SymMatrix) -> SymMatrix {
    &mix.xi_prime(q) + &random_pd(rng, q.dim(), 0.3)
}

/// Mixture with randomly chosen optional 4-spin term and field.
pub fn random_mixture_any(rng: &mut ChaCha8Rng, n: usize) -> MixtureSpec {
    let (p4, field) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
    random_mixture(rng, n, p4, field)
}
