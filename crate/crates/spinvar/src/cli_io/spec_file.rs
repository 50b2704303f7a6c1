//! Problem definition files: TOML with a mandatory version header line.
//!
//! ```toml
//! # spinvar-spec 1
//! n = 1
//! field = [0.0]
//! constraint = [1.0]        # row-major upper triangle
//! commands = ["gap"]
//!
//! [[mixture]]
//! p = 2
//! beta = [0.3]
//!
//! [solver]                  # optional, every solver option may appear
//! r_max = 3
//!
//! [path]                    # optional explicit point
//! weights = [0.0, 1.0]
//! levels = [[0.25]]         # upper triangles of Q_1 .. Q_{r-1}
//! lambda = [1.5]
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mat_core::{ConstraintMatrix, MixtureSpec, MixtureTerm, SymMatrix};
use crate::optimize::SolveOptions;
use crate::path_model::DiscretePath;

pub const SPEC_HEADER: &str = "# spinvar-spec 1";

pub const COMMANDS: [&str; 6] = ["eval", "minimize", "gap", "verify", "continuous", "probe"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecError {
    Io(String),
    Parse { line: usize, key: Option<String>, message: String },
    Validation { invariant: String, detail: String },
}

impl SpecError {
    fn invalid(invariant: &str, detail: impl Into<String>) -> Self {
        SpecError::Validation { invariant: invariant.to_string(), detail: detail.into() }
    }
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecError::Io(m) => write!(f, "io error: {m}"),
            SpecError::Parse { line, key: Some(k), message } => write!(f, "parse error at line {line}, key `{k}`: {message}"),
            SpecError::Parse { line, key: None, message } => write!(f, "parse error at line {line}: {message}"),
            SpecError::Validation { invariant, detail } => write!(f, "validation error ({invariant}): {detail}"),
        }
    }
}

/// Every problem found in a spec file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecErrors(pub Vec<SpecError>);

impl fmt::Display for SpecErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SpecErrors {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    p: u32,
    beta: Vec<f64>,
}

/// Solver table; every field optional, defaults filled from [`SolveOptions::default`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverTable {
    pub eps_schedule: Option<Vec<f64>>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub armijo_c: Option<f64>,
    pub armijo_shrink: Option<f64>,
    pub x_grid: Option<usize>,
    pub r_max: Option<usize>,
    pub seed: Option<u64>,
    pub beta2_delta: Option<f64>,
    pub refine_levels: Option<usize>,
    pub diagonal_only: Option<bool>,
}

impl SolverTable {
    /// Fields set here replace the ones in `base`.
    pub fn apply(&self, base: &SolveOptions) -> SolveOptions {
        let mut o = base.clone();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { o.$f = v.clone(); })* };
        }
        set!(eps_schedule, max_iters, grad_tol, armijo_c, armijo_shrink, x_grid, r_max, seed, beta2_delta, refine_levels, diagonal_only);
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    weights: Vec<f64>,
    levels: Vec<Vec<f64>>,
    lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    n: usize,
    #[serde(default)]
    field: Option<Vec<f64>>,
    constraint: Vec<f64>,
    #[serde(default)]
    commands: Vec<String>,
    mixture: Vec<RawTerm>,
    #[serde(default)]
    solver: SolverTable,
    #[serde(default)]
    path: Option<RawPath>,
}

/// Validated problem definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub mix: MixtureSpec,
    pub constraint: ConstraintMatrix,
    pub options: SolveOptions,
    pub commands: Vec<String>,
    /// Explicit path and optional multiplier from the `[path]` table.
    pub path: Option<(DiscretePath, Option<SymMatrix>)>,
    canonical: String,
}

impl ProblemSpec {
    pub fn n(&self) -> usize {
        self.mix.n()
    }

    /// Canonical re-serialization of the parsed input, the basis of the input digest.
    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn with_options(&self, options: SolveOptions) -> Self {
        Self { options, ..self.clone() }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

pub fn load_spec(path: &Path) -> Result<ProblemSpec, SpecErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecErrors(vec![SpecError::Io(e.to_string())]))?;
    parse_spec(&text)
}

pub fn parse_spec(text: &str) -> Result<ProblemSpec, SpecErrors> {
    if text.lines().next().map(str::trim_end) != Some(SPEC_HEADER) {
        return Err(SpecErrors(vec![SpecError::Parse {
            line: 1,
            key: None,
            message: format!("missing header line `{SPEC_HEADER}`"),
        }]));
    }
    let raw: RawSpec = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_of(text, s.start));
        let message = e.message().to_string();
        SpecErrors(vec![SpecError::Parse { line, key: backticked(&message), message }])
    })?;
    validate(raw)
}

fn upper_len(n: usize) -> usize {
    n * (n + 1) / 2
}

fn validate(raw: RawSpec) -> Result<ProblemSpec, SpecErrors> {
    let mut errs = Vec::new();
    let n = raw.n;
    if n == 0 {
        errs.push(SpecError::invalid("species count", "n must be positive"));
        return Err(SpecErrors(errs));
    }
    let field = raw.field.clone().unwrap_or_else(|| vec![0.0; n]);
    if field.len() != n {
        errs.push(SpecError::invalid("field length", format!("expected {n} entries, found {}", field.len())));
    }
    if field.iter().any(|v| !v.is_finite()) {
        errs.push(SpecError::invalid("finite field", "field entries must be finite"));
    }

    let mut q = None;
    if raw.constraint.len() != upper_len(n) {
        errs.push(SpecError::invalid(
            "constraint length",
            format!("expected {} upper-triangle entries, found {}", upper_len(n), raw.constraint.len()),
        ));
    } else if let Ok(m) = SymMatrix::from_upper(n, &raw.constraint) {
        let mut ok = true;
        if (0..n).any(|i| m[(i, i)] != 1.0) {
            errs.push(SpecError::invalid("unit diagonal", "constraint diagonal must be 1"));
            ok = false;
        }
        if (0..n).any(|i| (0..n).any(|j| i != j && !(m[(i, j)].abs() <= 1.0))) {
            errs.push(SpecError::invalid("off-diagonal range", "off-diagonal entries must lie in [-1, 1]"));
            ok = false;
        }
        if ok {
            match ConstraintMatrix::new(m) {
                Ok(c) => q = Some(c),
                Err(_) => errs.push(SpecError::invalid("positive definite", "constraint must be positive definite")),
            }
        }
    }

    if raw.mixture.is_empty() {
        errs.push(SpecError::invalid("mixture terms", "at least one [[mixture]] term is required"));
    }
    for (i, t) in raw.mixture.iter().enumerate() {
        if t.p < 2 || t.p % 2 != 0 {
            errs.push(SpecError::invalid("even p required", format!("mixture term {i} has p = {}", t.p)));
        }
        if t.beta.len() != n {
            errs.push(SpecError::invalid("beta length", format!("mixture term {i}: expected {n} entries")));
        }
        if t.beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            errs.push(SpecError::invalid("nonnegative beta", format!("mixture term {i} has a negative or non-finite entry")));
        }
    }

    let options = raw.solver.apply(&SolveOptions::default());
    for msg in options.validate() {
        errs.push(SpecError::invalid("solver options", msg));
    }
    for c in &raw.commands {
        if !COMMANDS.contains(&c.as_str()) {
            errs.push(SpecError::invalid("known command", format!("unknown command `{c}`")));
        }
    }

    let terms: Vec<MixtureTerm> = raw.mixture.iter().map(|t| MixtureTerm { p: t.p, beta: t.beta.clone() }).collect();
    let mix = if errs.is_empty() {
        match MixtureSpec::new(n, terms, field) {
            Ok(m) => Some(m),
            Err(e) => {
                errs.push(SpecError::invalid("mixture", e.to_string()));
                None
            }
        }
    } else {
        None
    };

    let mut path = None;
    if let (Some(rp), Some(qc)) = (&raw.path, &q) {
        let r = rp.weights.len();
        if rp.levels.len() + 1 != r {
            errs.push(SpecError::invalid("path levels", format!("{r} weights need {} levels", r.saturating_sub(1))));
        } else if rp.levels.iter().any(|l| l.len() != upper_len(n)) || rp.lambda.as_ref().is_some_and(|l| l.len() != upper_len(n)) {
            errs.push(SpecError::invalid("path matrix size", format!("matrices need {} upper-triangle entries", upper_len(n))));
        } else {
            let free: Vec<SymMatrix> = rp.levels.iter().map(|l| SymMatrix::from_upper(n, l).expect("length checked")).collect();
            match DiscretePath::new(rp.weights.clone(), free, qc.matrix()) {
                Ok(p) => {
                    let lambda = rp.lambda.as_ref().map(|l| SymMatrix::from_upper(n, l).expect("length checked"));
                    path = Some((p, lambda));
                }
                Err(e) => errs.push(SpecError::invalid("path", e.to_string())),
            }
        }
    }

    if !errs.is_empty() {
        return Err(SpecErrors(errs));
    }
    let canonical = toml::to_string(&raw).expect("spec re-serializes");
    Ok(ProblemSpec {
        mix: mix.expect("no errors"),
        constraint: q.expect("no errors"),
        options,
        commands: raw.commands,
        path,
        canonical,
    })
}
