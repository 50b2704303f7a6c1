use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use spinvar::cli_io::{emit_all, load_spec, run, Command, ExitStatus, Format, ProblemSpec, RunFlags, SolverTable};

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

/// Evaluate, minimize and cross-check the Parisi and Crisanti-Sommers functionals.
#[derive(Debug, Parser)]
#[command(name = "spinvar", version)]
struct Cli {
    /// One of eval, minimize, gap, verify, continuous, probe. Omit to run the spec's `commands`.
    command: Option<String>,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
    /// Sampled pairs for `probe`, random directions for `verify`.
    #[arg(long, default_value_t = 32)]
    samples: usize,

    #[arg(long = "eps-schedule", value_delimiter = ',')]
    eps_schedule: Option<Vec<f64>>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long = "grad-tol", visible_alias = "tol")]
    grad_tol: Option<f64>,
    #[arg(long = "armijo-c")]
    armijo_c: Option<f64>,
    #[arg(long = "armijo-shrink")]
    armijo_shrink: Option<f64>,
    #[arg(long = "x-grid", visible_alias = "grid")]
    x_grid: Option<usize>,
    #[arg(long = "r-max")]
    r_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "beta2-delta")]
    beta2_delta: Option<f64>,
    #[arg(long = "refine-levels")]
    refine_levels: Option<usize>,
    #[arg(long = "diagonal-only")]
    diagonal_only: Option<bool>,
}

impl Cli {
    fn overrides(&self) -> SolverTable {
        SolverTable {
            eps_schedule: self.eps_schedule.clone(),
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            armijo_c: self.armijo_c,
            armijo_shrink: self.armijo_shrink,
            x_grid: self.x_grid,
            r_max: self.r_max,
            seed: self.seed,
            beta2_delta: self.beta2_delta,
            refine_levels: self.refine_levels,
            diagonal_only: self.diagonal_only,
        }
    }
}

fn resolve(cli: &Cli) -> Result<(ProblemSpec, Vec<Command>), String> {
    let spec = load_spec(&cli.spec).map_err(|e| e.to_string())?;
    let options = cli.overrides().apply(&spec.options);
    let errs = options.validate();
    if !errs.is_empty() {
        return Err(errs.iter().map(|e| format!("validation error (solver options): {e}")).collect::<Vec<_>>().join("\n"));
    }
    let names: Vec<String> = match &cli.command {
        Some(c) => vec![c.clone()],
        None if spec.commands.is_empty() => return Err("no command given and the spec lists none".into()),
        None => spec.commands.clone(),
    };
    let commands = names.iter().map(|c| c.parse::<Command>()).collect::<Result<Vec<_>, _>>()?;
    Ok((spec.with_options(options), commands))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (spec, commands) = match resolve(&cli) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(ExitStatus::Validation.code() as u8);
        }
    };
    let format = match cli.format {
        FormatArg::Jsonl => Format::JsonLines,
        FormatArg::Csv => Format::Csv,
    };
    let flags = RunFlags { samples: cli.samples };
    let mut worst = ExitStatus::Success;
    for command in commands {
        match run(command, &spec, &flags) {
            Ok(outcome) => {
                match emit_all(&outcome.record, format, &cli.out) {
                    Ok(paths) => {
                        for p in paths {
                            println!("{command}: wrote {}", p.display());
                        }
                    }
                    Err(e) => {
                        eprintln!("{command}: cannot write results: {e}");
                        return ExitCode::FAILURE;
                    }
                }
                if outcome.status != ExitStatus::Success {
                    eprintln!("{command}: solver did not converge; best iterate reported");
                    worst = worst.worst(outcome.status);
                }
            }
            Err(e) => {
                let status = ExitStatus::of_error(&e);
                eprintln!("{command}: error[{}]: {e}", ExitStatus::error_code(&e));
                worst = worst.worst(status);
            }
        }
    }
    ExitCode::from(worst.code() as u8)
}
