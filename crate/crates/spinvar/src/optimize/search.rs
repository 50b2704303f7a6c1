use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{continuation, ContinuationResult, SolveOptions, TraceRow};
use crate::error::{Result, SpinError};
use crate::functionals::FunctionalKind;
use crate::mat_core::{ConstraintMatrix, MixtureSpec, SymMatrix};
use crate::path_model::DiscretePath;

/// Relative margin a candidate must beat the incumbent by to replace it.
const TIE_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 4;

/// Best continuation result found by the weight search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub r: usize,
    pub x: Vec<f64>,
    pub best: ContinuationResult,
    /// Best value found for each level count, in order `r = 2, 3, ...`.
    pub per_r: Vec<(usize, f64)>,
    pub evaluations: usize,
}

impl SearchResult {
    pub fn value(&self) -> f64 {
        self.best.value_at_eps_min
    }

    pub fn path(&self) -> &DiscretePath {
        &self.best.last().state.path
    }

    pub fn lambda(&self) -> Option<&SymMatrix> {
        self.best.last().state.lambda.as_ref()
    }
}

fn score(res: &ContinuationResult) -> f64 {
    res.value_at_eps_min
}

fn better(a: (&[f64], f64), b: (&[f64], f64)) -> bool {
    let tol = 1e-12 * (1.0 + a.1.abs().max(b.1.abs()));
    if a.1 < b.1 - tol {
        return true;
    }
    if a.1 > b.1 + tol {
        return false;
    }
    a.0.iter().partial_cmp(b.0.iter()) == Some(std::cmp::Ordering::Less)
}

type Key = Vec<i64>;

fn key(x: &[f64]) -> Key {
    x.iter().map(|v| (v * (1u64 << 30) as f64).round() as i64).collect()
}

struct Evaluator<'a> {
    kind: FunctionalKind,
    mix: &'a MixtureSpec,
    qc: &'a ConstraintMatrix,
    opts: &'a SolveOptions,
    cache: BTreeMap<Key, Option<ContinuationResult>>,
    first_error: Option<SpinError>,
}

impl Evaluator<'_> {
    /// Evaluates every uncached candidate in parallel, then returns the best of `xs` (ties go to
    /// the lexicographically smaller weight vector, so the outcome is independent of scheduling).
    fn best_of(&mut self, xs: &[Vec<f64>]) -> Option<(Vec<f64>, f64)> {
        let todo: Vec<Vec<f64>> = {
            let mut seen = std::collections::BTreeSet::new();
            xs.iter().filter(|x| !self.cache.contains_key(&key(x)) && seen.insert(key(x))).cloned().collect()
        };
        let results: Vec<(Vec<f64>, Result<ContinuationResult>)> = todo
            .into_par_iter()
            .map(|x| {
                let r = continuation(self.kind, self.mix, self.qc, &x, self.opts);
                (x, r)
            })
            .collect();
        for (x, r) in results {
            match r {
                Ok(res) if score(&res).is_finite() => {
                    self.cache.insert(key(&x), Some(res));
                }
                Ok(_) => {
                    self.cache.insert(key(&x), None);
                }
                Err(e) => {
                    self.first_error.get_or_insert(e);
                    self.cache.insert(key(&x), None);
                }
            }
        }
        let mut best: Option<(Vec<f64>, f64)> = None;
        for x in xs {
            if let Some(Some(res)) = self.cache.get(&key(x)) {
                let v = score(res);
                if best.as_ref().is_none_or(|(bx, bv)| better((x, v), (bx, *bv))) {
                    best = Some((x.clone(), v));
                }
            }
        }
        best
    }
}

fn grid_range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = (lo / step).floor() as i64 + 1;
    loop {
        let v = k as f64 * step;
        if v >= hi - 1e-12 {
            break;
        }
        if v > lo + 1e-12 {
            out.push(v);
        }
        k += 1;
    }
    out
}

/// Coordinate descent over the interior weights of an `r`-level path.
fn search_r(ev: &mut Evaluator, r: usize) -> Option<(Vec<f64>, f64)> {
    let step = 1.0 / ev.opts.x_grid as f64;
    if r == 2 {
        return ev.best_of(&[vec![0.0, 1.0]]);
    }
    // Start from the grid point nearest to equal spacing, kept strictly increasing.
    let mut x: Vec<f64> = (0..r).map(|k| ((k as f64 / (r - 1) as f64) / step).round() * step).collect();
    x[r - 1] = 1.0;
    for k in 1..r {
        if x[k] <= x[k - 1] {
            x[k] = x[k - 1] + step;
        }
    }
    if x[r - 2] >= 1.0 {
        // Grid too coarse for this many levels.
        return None;
    }
    let mut best = ev.best_of(&[x.clone()])?;
    let mut h = step;
    for level in 0..=ev.opts.refine_levels {
        for _ in 0..MAX_SWEEPS {
            let mut improved = false;
            for i in 1..r - 1 {
                let cur = &best.0;
                let candidates: Vec<Vec<f64>> = if level == 0 {
                    grid_range(cur[i - 1], cur[i + 1], h)
                        .into_iter()
                        .map(|v| {
                            let mut c = cur.clone();
                            c[i] = v;
                            c
                        })
                        .collect()
                } else {
                    [-h, h]
                        .iter()
                        .map(|d| {
                            let mut c = cur.clone();
                            c[i] += d;
                            c
                        })
                        .filter(|c| c[i] > c[i - 1] && c[i] < c[i + 1])
                        .collect()
                };
                let mut all = candidates;
                all.push(best.0.clone());
                if let Some(b) = ev.best_of(&all) {
                    if b.0 != best.0 {
                        improved = true;
                    }
                    best = b;
                }
            }
            if !improved {
                break;
            }
        }
        h *= 0.5;
    }
    Some(best)
}

/// Searches weights and level counts `r = 2..=r_max` for the smallest value of the chosen
/// functional (last weight pinned to one).
pub fn search(kind: FunctionalKind, mix: &MixtureSpec, qc: &ConstraintMatrix, opts: &SolveOptions) -> Result<SearchResult> {
    let errs = opts.validate();
    if !errs.is_empty() {
        return Err(SpinError::Invalid(errs.join("; ")));
    }
    if mix.n() != qc.dim() {
        return Err(SpinError::DimensionMismatch { expected: mix.n(), found: qc.dim() });
    }
    let mut ev = Evaluator { kind, mix, qc, opts, cache: BTreeMap::new(), first_error: None };
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut per_r = Vec::new();
    for r in 2..=opts.r_max {
        let Some((x, v)) = search_r(&mut ev, r) else { continue };
        per_r.push((r, v));
        let replace = match &incumbent {
            None => true,
            Some((_, bv)) => v < bv - TIE_TOL * (1.0 + bv.abs()),
        };
        if replace {
            incumbent = Some((x, v));
        }
    }
    let Some((x, _)) = incumbent else {
        return Err(ev.first_error.unwrap_or(SpinError::NoFeasibleStart));
    };
    let best = ev.cache.get(&key(&x)).cloned().flatten().expect("incumbent is cached");
    Ok(SearchResult { r: x.len(), x, best, per_r, evaluations: ev.cache.len() })
}

/// Both minima, their gap and the search artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub min_parisi: f64,
    pub min_cs: f64,
    /// `|min_parisi - min_cs|`.
    pub gap: f64,
    pub min_parisi_extrapolated: f64,
    pub min_cs_extrapolated: f64,
    pub parisi: SearchResult,
    pub cs: SearchResult,
    /// Set when a zero quadratic coefficient was lifted before solving; both minima then refer
    /// to the shifted mixture and differ from the original ones by at most twice this distance.
    pub delta_band: Option<f64>,
    pub converged: bool,
}

impl GapReport {
    pub fn argmin_parisi(&self) -> (&SymMatrix, &DiscretePath) {
        (self.parisi.lambda().expect("Parisi side carries a multiplier"), self.parisi.path())
    }

    pub fn argmin_cs(&self) -> &DiscretePath {
        self.cs.path()
    }

    pub fn eps_trace(&self) -> (Vec<TraceRow>, Vec<TraceRow>) {
        (self.parisi.best.trace(), self.cs.best.trace())
    }

    /// Acceptance band for the gap: the requested tolerance plus the temperature shift's effect.
    pub fn band(&self, tol: f64) -> f64 {
        tol + 2.0 * self.delta_band.unwrap_or(0.0)
    }
}

/// Minimizes both functionals independently and reports the gap between the two minima.
pub fn duality_gap(mix: &MixtureSpec, qc: &ConstraintMatrix, opts: &SolveOptions) -> Result<GapReport> {
    let (work, delta_band) = if mix.has_positive_beta2() || opts.beta2_delta == 0.0 {
        (mix.clone(), None)
    } else {
        let shifted = mix.with_beta2_shift(opts.beta2_delta);
        let d = mix.temperature_distance(&shifted);
        (shifted, Some(d))
    };
    let (parisi, cs) = rayon::join(
        || search(FunctionalKind::Parisi, &work, qc, opts),
        || search(FunctionalKind::Cs, &work, qc, opts),
    );
    let (parisi, cs) = (parisi?, cs?);
    let (min_parisi, min_cs) = (parisi.value(), cs.value());
    Ok(GapReport {
        min_parisi,
        min_cs,
        gap: (min_parisi - min_cs).abs(),
        min_parisi_extrapolated: parisi.best.value_extrapolated,
        min_cs_extrapolated: cs.best.value_extrapolated,
        converged: parisi.best.converged() && cs.best.converged(),
        parisi,
        cs,
        delta_band,
    })
}
