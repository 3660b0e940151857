//! Command-line front end.

use clap::{Parser, Subcommand};
use pdesign::config::{parse_config, RunConfig};
use pdesign::runner::{run, Command};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pdesign",
    about = "Optimal two-phase material layout for p-Laplacian diffusion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to a key = value configuration file.
    config: PathBuf,
    /// Output directory for summaries and CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (overrides the config).
    #[arg(long)]
    threads: Option<usize>,
    /// Random seed for restart experiments (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Solve the relaxed design problem and export the solution bundle.
    Solve(CommonArgs),
    /// Print and export the exact radial solution on a disk.
    Oracle(CommonArgs),
    /// Realize laminates for the solved design over delta/epsilon lists.
    Laminate(CommonArgs),
    /// Primal-dual gap, flux feasibility and restart-uniqueness checks.
    DualCheck(CommonArgs),
    /// Regularity and nonexistence probes across refinement levels.
    Diagnose(CommonArgs),
}

fn load_config(args: &CommonArgs) -> pdesign::Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = parse_config(&text)?;
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(pdesign::Error::Config {
                key: "threads".into(),
                message: "must be >= 1".into(),
            });
        }
        config.threads = threads;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn dispatch(command: Command, args: &CommonArgs) -> pdesign::Result<()> {
    let config = load_config(args)?;
    let summary = run(command, &config, &args.out)?;
    // A few headline values on stdout; the full summary is on disk.
    let keys: &[&str] = match command {
        Command::Solve => &["result.mu_hat", "result.volume", "result.gap"],
        Command::Oracle => &["oracle.r0", "oracle.t_hat", "oracle.mu_hat"],
        Command::Laminate => &["laminate.rows", "laminate.final_gap"],
        Command::DualCheck => &["dual.gap", "dual.div_residual", "dual.flux_spread"],
        Command::Diagnose => &["diag.level0.intermediate_measure"],
    };
    for key in keys {
        if let Some(v) = summary.get(key) {
            println!("{key} = {v}");
        }
    }
    println!("summary: {}", args.out.join("summary.txt").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        CliCommand::Solve(a) => (Command::Solve, a),
        CliCommand::Oracle(a) => (Command::Oracle, a),
        CliCommand::Laminate(a) => (Command::Laminate, a),
        CliCommand::DualCheck(a) => (Command::DualCheck, a),
        CliCommand::Diagnose(a) => (Command::Diagnose, a),
    };
    match dispatch(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Machine-readable error block on stderr.
            eprintln!("status = error");
            eprintln!("kind = {}", error_kind(&err));
            eprintln!("message = {err}");
            ExitCode::FAILURE
        }
    }
}

fn error_kind(err: &pdesign::Error) -> &'static str {
    use pdesign::Error::*;
    match err {
        InvalidDomain(_) => "invalid_domain",
        InvalidMaterial(_) => "invalid_material",
        StorageMismatch(_) => "storage_mismatch",
        InvalidArgument(_) => "invalid_argument",
        NonConvergence { .. } => "non_convergence",
        BracketNotFound { .. } => "bracket_not_found",
        MeshTooCoarse { .. } => "mesh_too_coarse",
        Config { .. } => "config",
        Io(_) => "io",
    }
}
