//! Command-line front end: build ideal strategies, validate and score
//! strategy files, run noise sweeps, run extractions, and emit JSON/CSV
//! reports.
//!
//! Exit codes: 0 ok, 2 bad config, 3 schema violation, 4 dimension ceiling,
//! 5 numeric failure. Every error path prints a single-line JSON diagnostic
//! `{"code":N,"message":"..."}` on stderr. The dimension ceiling can be
//! overridden with the `GHZRIG_DIM_CEILING` environment variable.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ghzrig_core::game::{classical_value, ideal_strategy};
use ghzrig_core::rigidity::{extract, full_report, ExtractionResult, RelationReport};
use ghzrig_core::strategy::{NoiseKind, NoiseSpec, Strategy, ValidationReport};
use ghzrig_core::tensor::Tolerance;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "ghzrig",
    version,
    about = "Evaluate, simulate, and certify strategies for the augmented GHZ game",
    disable_help_subcommand = true
)]
struct RunConfig {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the artifact here instead of stdout.
    #[arg(long = "out")]
    out: Option<PathBuf>,
    /// Output format where both are supported.
    #[arg(long = "format", value_enum, default_value = "json")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Write the ideal strategy for n rounds as a strategy file.
    Ideal {
        #[arg(long = "n")]
        n: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Validate a strategy file and report its winning probability plus all
    /// relation residuals.
    Verify {
        /// Strategy file (JSON).
        strategy: PathBuf,
        /// Absolute tolerance for the validity checks.
        #[arg(long = "tol", default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Print the classical value of the n-round game (exhaustive search).
    Classical {
        #[arg(long = "n")]
        n: usize,
    },
    /// Sweep rotation noise over a theta grid and report the residual chain
    /// per point.
    Sweep {
        #[arg(long = "n")]
        n: usize,
        /// Grid as start:stop:step (inclusive endpoints).
        #[arg(long = "noise")]
        noise: NoiseGrid,
        #[arg(long = "seed", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Apply the swap isometries to a strategy file and report the
    /// extraction decomposition.
    Extract {
        /// Strategy file (JSON).
        strategy: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo rounds against the referee with a fixed seed.
    Simulate {
        /// Strategy file (JSON).
        strategy: PathBuf,
        #[arg(long = "rounds", default_value_t = 100_000)]
        rounds: u64,
        #[arg(long = "seed", default_value_t = 0)]
        seed: u64,
    },
}

/// Inclusive theta grid `start:stop:step`.
#[derive(Clone, Copy, Debug)]
struct NoiseGrid {
    start: f64,
    stop: f64,
    step: f64,
}

impl NoiseGrid {
    fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.start + self.step * i as f64)
            .collect()
    }
}

impl std::str::FromStr for NoiseGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:step, got '{s}'"));
        }
        let parse = |p: &str| -> Result<f64, String> {
            p.parse::<f64>()
                .map_err(|_| format!("'{p}' is not a number"))
        };
        let grid = NoiseGrid {
            start: parse(parts[0])?,
            stop: parse(parts[1])?,
            step: parse(parts[2])?,
        };
        if grid.step.is_nan() || grid.step <= 0.0 {
            return Err("grid step must be > 0".into());
        }
        if grid.stop < grid.start || grid.start < 0.0 {
            return Err("grid must satisfy 0 ≤ start ≤ stop".into());
        }
        Ok(grid)
    }
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

enum CliError {
    Core(ghzrig_core::Error),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                ghzrig_core::Error::Schema(_) => 3,
                ghzrig_core::Error::DimensionCeiling { .. } => 4,
                ghzrig_core::Error::Numeric(_) => 5,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

impl From<ghzrig_core::Error> for CliError {
    fn from(e: ghzrig_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn emit_diagnostic(code: i32, message: &str) {
    let line = serde_json::json!({ "code": code, "message": message });
    eprintln!("{line}");
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let config = match RunConfig::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            emit_diagnostic(2, &e.to_string());
            return 2;
        }
    };
    match run(config.command) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.code();
            emit_diagnostic(code, &e.message());
            code
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ideal { n, output } => {
            let strategy = ideal_strategy(n)?;
            write_json(&output, &strategy)
        }
        Command::Verify {
            strategy,
            tol,
            output,
        } => {
            let s = load_strategy(&strategy)?;
            let tol = Tolerance::new(tol)?;
            let report = VerifyReport::build(&s, tol)?;
            println!("winning_probability {:.9}", report.winning_probability);
            println!(
                "validation {}",
                if report.validation.ok { "ok" } else { "FAILED" }
            );
            println!(
                "max_relation_residual {:.3e}",
                report.relations.max_residual()
            );
            write_json_to_out_only(&output, &report)
        }
        Command::Classical { n } => {
            let v = classical_value(n)?;
            println!("{v}");
            Ok(())
        }
        Command::Sweep {
            n,
            noise,
            seed,
            output,
        } => {
            let base = ideal_strategy(n)?;
            let rows: Result<Vec<SweepRow>, ghzrig_core::Error> = noise
                .values()
                .par_iter()
                .map(|&theta| SweepRow::compute(&base, theta, seed))
                .collect();
            let rows = rows?;
            match output.format {
                OutputFormat::Json => write_json(&output, &rows),
                OutputFormat::Csv => write_text(&output, &sweep_csv(&rows)),
            }
        }
        Command::Extract { strategy, output } => {
            let s = load_strategy(&strategy)?;
            let result: ExtractionResult = extract(&s)?;
            println!(
                "fidelity {:.9} residual {:.3e} epsilon {:.3e}",
                result.fidelity, result.residual, result.epsilon
            );
            write_json_to_out_only(&output, &result)
        }
        Command::Simulate {
            strategy,
            rounds,
            seed,
        } => {
            let s = load_strategy(&strategy)?;
            let freq = s.simulate(rounds, seed)?;
            let sigma = (freq * (1.0 - freq) / rounds as f64).sqrt();
            println!(
                "frequency {:.9} rounds {rounds} seed {seed} ci3sigma ±{:.9}",
                freq,
                3.0 * sigma
            );
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct VerifyReport {
    winning_probability: f64,
    validation: ValidationReport,
    relations: RelationReport,
}

impl VerifyReport {
    fn build(s: &Strategy, tol: Tolerance) -> Result<VerifyReport, CliError> {
        let validation = s.validate(tol);
        let winning_probability = s.winning_probability()?;
        let relations = full_report(s)?;
        Ok(VerifyReport {
            winning_probability,
            validation,
            relations,
        })
    }
}

/// One noise-sweep point.
#[derive(Serialize)]
struct SweepRow {
    theta: f64,
    epsilon: f64,
    max_keyineq_residual: f64,
    max_anticommute_residual: f64,
    extraction_residual: f64,
    fidelity: f64,
    bound_ratio: f64,
}

impl SweepRow {
    fn compute(base: &Strategy, theta: f64, seed: u64) -> Result<SweepRow, ghzrig_core::Error> {
        let spec = NoiseSpec {
            kind: NoiseKind::Rotation,
            theta,
            seed,
        };
        let noisy = base.perturb(&spec)?;
        let relations = full_report(&noisy)?;
        let extraction = extract(&noisy)?;
        Ok(SweepRow {
            theta,
            epsilon: extraction.epsilon,
            max_keyineq_residual: relations.keyineq.max_residual,
            max_anticommute_residual: relations.anticommute.max_residual,
            extraction_residual: extraction.residual,
            fidelity: extraction.fidelity,
            bound_ratio: extraction.bound_ratio,
        })
    }
}

/// CSV with a header row and 12 significant digits, '.' decimal.
fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "theta,epsilon,max_keyineq_residual,max_anticommute_residual,\
         extraction_residual,fidelity,bound_ratio\n",
    );
    for r in rows {
        writeln!(
            out,
            "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
            r.theta,
            r.epsilon,
            r.max_keyineq_residual,
            r.max_anticommute_residual,
            r.extraction_residual,
            r.fidelity,
            r.bound_ratio
        )
        .expect("write to string");
    }
    out
}

// ---------------------------------------------------------------------------
// I/O helpers
// ---------------------------------------------------------------------------

fn load_strategy(path: &Path) -> Result<Strategy, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Core(ghzrig_core::Error::Schema(format!(
            "{}: {e}",
            path.display()
        )))
    })
}

fn write_json<T: Serialize>(output: &OutputArgs, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_text(output, &text)
}

/// Writes JSON only when `--out` was given; the command already printed its
/// human-readable summary to stdout.
fn write_json_to_out_only<T: Serialize>(output: &OutputArgs, value: &T) -> Result<(), CliError> {
    if output.out.is_some() {
        write_json(output, value)
    } else {
        Ok(())
    }
}

fn write_text(output: &OutputArgs, text: &str) -> Result<(), CliError> {
    match &output.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
