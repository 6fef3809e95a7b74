use clap::{Args, Parser, Subcommand};
use mildpath::experiments::{emit_report, run_experiment, ExperimentConfig, ExperimentKind};
use mildpath::MildError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Pathwise mild solutions driven by rough paths: experiment driver.
#[derive(Parser)]
#[command(name = "mildpath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed point for an fBm driver, with residual, contraction and uniqueness checks.
    Solve(RunArgs),
    /// Smooth driver: compare with the exponential Euler scheme and the product area.
    ValidateSmooth(RunArgs),
    /// Cauchy differences between dyadic refinements of one fBm sample.
    ConvergenceH3(RunArgs),
    /// Inequality, by-parts, Chen, additivity, Lipschitz and regularity suites.
    Invariants(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to `out_dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `path.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `path.level` (the grid has `2^level` cells).
    #[arg(long)]
    level: Option<u32>,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<bool, MildError> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    config.kind = Some(kind);
    if let Some(s) = args.seed {
        config.path.seed = s;
    }
    if let Some(l) = args.level {
        config.path.level = Some(l);
    }
    let out = match (args.out, &config.out_dir) {
        (Some(p), _) => p,
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => return Err(MildError::Config("no output directory: pass --out or set out_dir".into())),
    };
    config.validate()?;
    let report = run_experiment(&config)?;
    emit_report(&report, &config, &out)?;
    for c in &report.criteria {
        println!("{:<36} {:>14.6e} {:>12.3e} {}", c.name, c.value, c.threshold, if c.pass { "pass" } else { "FAIL" });
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Solve(a) => (ExperimentKind::Solve, a),
        Command::ValidateSmooth(a) => (ExperimentKind::ValidateSmooth, a),
        Command::ConvergenceH3(a) => (ExperimentKind::ConvergenceH3, a),
        Command::Invariants(a) => (ExperimentKind::Invariants, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
