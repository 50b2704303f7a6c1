//! Problem files, command orchestration and result emission for the `spinvar` binary.

mod commands;
mod record;
mod spec_file;

pub use record::{
    emit, emit_all, fmt_f64, to_csv, to_json_lines, trace_csv, CheckRow, Format, LevelRow, ResultRecord, Value,
    RECORD_HEADER, TRACE_HEADER,
};
pub use spec_file::{load_spec, parse_spec, ProblemSpec, SolverTable, SpecError, SpecErrors, COMMANDS, SPEC_HEADER};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::SpinError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Eval,
    Minimize,
    Gap,
    Verify,
    Continuous,
    Probe,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Eval => "eval",
            Command::Minimize => "minimize",
            Command::Gap => "gap",
            Command::Verify => "verify",
            Command::Continuous => "continuous",
            Command::Probe => "probe",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "eval" => Command::Eval,
            "minimize" => Command::Minimize,
            "gap" => Command::Gap,
            "verify" => Command::Verify,
            "continuous" => Command::Continuous,
            "probe" => Command::Probe,
            other => return Err(format!("unknown command `{other}`")),
        })
    }
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Validation = 2,
    Infeasible = 3,
    NonConvergence = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// The status with the larger code.
    pub fn worst(self, other: ExitStatus) -> ExitStatus {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }

    pub fn of_error(e: &SpinError) -> Self {
        match e {
            SpinError::AtStage { source, .. } => Self::of_error(source),
            SpinError::DimensionMismatch { .. } | SpinError::NonStrictWeights(_) | SpinError::Invalid(_) => {
                ExitStatus::Validation
            }
            _ => ExitStatus::Infeasible,
        }
    }

    /// Short machine-readable error code.
    pub fn error_code(e: &SpinError) -> &'static str {
        match e {
            SpinError::AtStage { source, .. } => Self::error_code(source),
            SpinError::DimensionMismatch { .. } => "dimension_mismatch",
            SpinError::NotPositiveDefinite => "not_positive_definite",
            SpinError::ZeroDivisor(..) => "zero_divisor",
            SpinError::InfeasibleMultiplier { .. } => "infeasible_multiplier",
            SpinError::InfeasiblePath { .. } => "infeasible_path",
            SpinError::DegenerateIncrement(_) => "degenerate_increment",
            SpinError::NonStrictWeights(_) => "non_strict_weights",
            SpinError::InfeasibleStep => "infeasible_step",
            SpinError::DegenerateTrace(..) => "degenerate_trace",
            SpinError::NoFeasibleStart => "no_feasible_start",
            SpinError::Invalid(_) => "invalid_input",
        }
    }
}

/// Extra knobs that are not solver options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunFlags {
    /// Number of sampled pairs for `probe` and of random directions for `verify`.
    pub samples: usize,
}

impl Default for RunFlags {
    fn default() -> Self {
        Self { samples: 32 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub record: ResultRecord,
    pub status: ExitStatus,
}

/// SHA-256 over the canonical spec, the resolved options and the command.
pub fn input_digest(spec: &ProblemSpec, command: Command, flags: &RunFlags) -> String {
    let mut h = Sha256::new();
    h.update(spec.canonical().as_bytes());
    h.update(format!("{:?}", spec.options).as_bytes());
    h.update(format!("{command}:{}", flags.samples).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs one command. Solver non-convergence is reported through the status, not as an error.
pub fn run(command: Command, spec: &ProblemSpec, flags: &RunFlags) -> Result<RunOutcome, SpinError> {
    let start = Instant::now();
    let mut rec = ResultRecord::new(command.as_str(), &input_digest(spec, command, flags), spec.options.seed);
    let converged = match command {
        Command::Eval => commands::eval(spec, &mut rec)?,
        Command::Minimize => commands::minimize(spec, &mut rec)?,
        Command::Gap => commands::gap(spec, &mut rec)?,
        Command::Verify => commands::verify(spec, flags, &mut rec)?,
        Command::Continuous => commands::continuous(spec, &mut rec)?,
        Command::Probe => commands::probe(spec, flags, &mut rec)?,
    };
    rec.wall_time_s = start.elapsed().as_secs_f64();
    let status = if converged { ExitStatus::Success } else { ExitStatus::NonConvergence };
    Ok(RunOutcome { record: rec, status })
}
