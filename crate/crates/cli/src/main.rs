use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use enspod_cli::experiment::{cmd_compare, cmd_convergence, cmd_mesh_gen, cmd_pod, cmd_rom, cmd_snapshots};
use enspod_cli::{CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "enspod", version, about = "Ensemble Navier-Stokes runs and POD reduced-order models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured mesh as `mesh.msh2d`.
    MeshGen(Common),
    /// Full ensemble run; stores snapshots and the energy/enstrophy series.
    Snapshots(Common),
    /// POD basis from stored snapshots, with the tail identity self-check.
    Pod(Common),
    /// Reduced runs for every R in `r_list` in the configured mode.
    Rom(Common),
    /// Data-mining and extrapolatory errors side by side.
    Compare(Common),
    /// Temporal convergence study on the manufactured solution.
    Convergence(Common),
}

fn run(cli: Cli) -> CliResult<String> {
    let (common, cmd): (&Common, fn(&ExperimentConfig, &std::path::Path) -> CliResult<String>) = match &cli.command {
        Command::MeshGen(c) => (c, cmd_mesh_gen),
        Command::Snapshots(c) => (c, cmd_snapshots),
        Command::Pod(c) => (c, cmd_pod),
        Command::Rom(c) => (c, cmd_rom),
        Command::Compare(c) => (c, cmd_compare),
        Command::Convergence(c) => (c, cmd_convergence),
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cmd(&cfg, &cfg.out_dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
