//! `socialturn` command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "socialturn", version, about = "Interaction-aware left-turn decisions: analysis, learning and simulation")]
struct Cli {
    /// Where to write the run manifest [default: next to the first output]
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-frame ITSI, S_norm and IO of every event
    IoAnalyze(IoAnalyzeArgs),
    /// Build and solve one game
    Solve(SolveArgs),
    /// Extract labelled events from a trajectory CSV
    Ingest(IngestArgs),
    /// Generate labelled events from known coefficients
    Synth(SynthArgs),
    /// Fit an expert library with the genetic algorithm
    Learn(LearnArgs),
    /// Crossing-order accuracy of an engine on labelled events
    Predict(EngineArgs),
    /// Decision-point timing of an engine on labelled events
    Eval(EngineArgs),
    /// Run a batch of simulated episodes
    Simulate(SimulateArgs),
    /// Serve live sessions over WebSocket
    Serve(ServeArgs),
    /// Re-run a command from its manifest and compare outputs
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct IoAnalyzeArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Orientation config (JSON)
    #[arg(long)]
    pub orientation: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Scenario (JSON): either `bimatrix`, or `state` plus `coefficients` or `library`
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the result as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// Intersection geometry (JSON)
    #[arg(long)]
    pub geometry: PathBuf,
    #[arg(long)]
    pub orientation: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthesis config (JSON, partial)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub per_category: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Labelled events (JSON lines)
    #[arg(long)]
    pub data: PathBuf,
    /// Learning config (JSON, partial)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Best loss per generation (CSV)
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub library: PathBuf,
    /// Use the library's single global parameter set
    #[arg(long)]
    pub baseline: bool,
    /// Seeds the payoff disturbances
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON, partial)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Expert library; without one every category uses all-ones coefficients
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long, requires = "library")]
    pub baseline: bool,
    /// HV policies cycled over episodes: `config`, `mix`, or a comma list of
    /// `aggressive`, `conservative`, `oscillating`
    #[arg(long, default_value = "config")]
    pub policies: String,
    #[arg(long)]
    pub episodes: usize,
    #[arg(long)]
    pub seed: u64,
    /// Per-episode metrics (CSV)
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-step episode logs (JSON lines)
    #[arg(long)]
    pub logs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub addr: String,
    #[arg(long)]
    pub library: PathBuf,
    #[arg(long)]
    pub baseline: bool,
    /// Default simulation config (JSON, partial)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Wall time per tick of paced sessions
    #[arg(long, default_value_t = 100)]
    pub tick_ms: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match commands::dispatch(cli.command, cli.manifest, strip_manifest(&argv[1..])) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

/// Drops `--manifest` so a replay does not overwrite the original manifest.
fn strip_manifest(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--manifest" {
            skip = true;
        } else if !a.starts_with("--manifest=") {
            out.push(a.clone());
        }
    }
    out
}

/// Parses a recorded argument list the same way as the command line.
fn parse_args(args: &[String]) -> Result<Command, clap::Error> {
    let argv = std::iter::once("socialturn".to_string()).chain(args.iter().cloned());
    Cli::try_parse_from(argv).map(|c| c.command)
}
