use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lamlab::lab::{load_scenario, run_stage, LabError, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "lamlab", version, about = "Transmission problems on layered domains")]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replace the artifacts of an earlier run in the output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory of the run.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sampled checks of the frame fields of the scenario's stack.
    VerifyGeometry(Io),
    /// Build the interface-fitted mesh.
    Mesh(Io),
    /// Mesh and solve.
    Solve(Io),
    /// Mesh, solve and measure regularity.
    Diagnose(Io),
    /// Gap sweep over the neck-layers family.
    Sweep(Io),
    /// Mesh, solve, diagnostics and the sweep if configured.
    Run(Io),
    /// Solve on successively refined meshes and fit rates.
    Convergence {
        #[command(flatten)]
        io: Io,
        /// Number of refinements.
        #[arg(long, default_value_t = 3)]
        refine: usize,
    },
}

fn run(cli: Cli) -> Result<(), LabError> {
    let (io, stage) = match cli.command {
        Command::VerifyGeometry(io) => (io, Stage::VerifyGeometry),
        Command::Mesh(io) => (io, Stage::Mesh),
        Command::Solve(io) => (io, Stage::Solve),
        Command::Diagnose(io) => (io, Stage::Diagnose),
        Command::Sweep(io) => (io, Stage::Sweep),
        Command::Run(io) => (io, Stage::Run),
        Command::Convergence { io, refine } => (io, Stage::Convergence { refine }),
    };
    let config = load_scenario(&io.scenario)?;
    let opts = RunOptions { force: cli.force, seed: cli.seed };
    let manifest = run_stage(&config, &io.out, stage, &opts)?;
    if !cli.quiet {
        println!("{} -> {}", manifest.scenario_hash, manifest.out_dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
