use clap::{Parser, Subcommand};
use driftwatch::pipeline::{self, exit_code, load_scenario, RunConfig, RunRequest};
use driftwatch::simulator;
use driftwatch::Result;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "driftwatch", about = "Detect drifting containers in onboard video", version = driftwatch::VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a frame sequence (frames + masks) or a simulated scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory of numbered .pgm frames.
        #[arg(long, requires = "masks", conflicts_with = "scenario")]
        frames: Option<PathBuf>,
        /// JSON-lines mask file, one record per frame.
        #[arg(long, requires = "frames")]
        masks: Option<PathBuf>,
        /// Scenario JSON to render and analyse in memory.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write annotated PNG frames.
        #[arg(long)]
        annotate: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a scenario to frames, masks and ground truth.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the version.
    Version,
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            frames,
            masks,
            scenario,
            out,
            annotate,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let req = RunRequest::resolve(cfg, frames, masks, scenario, out, annotate, seed)?;
            let summary = pipeline::run(&req)?;
            println!(
                "{} frames, {} tracks, {} alerts, {} degraded frames -> {}",
                summary.frames,
                summary.tracks_created,
                summary.alerts,
                summary.degraded_frames,
                req.out_dir.display()
            );
        }
        Command::Simulate { scenario, out } => {
            let sc = load_scenario(&scenario)?;
            let manifest = simulator::emit(&sc, &out)?;
            println!("{} frames -> {}", manifest.frames.len(), out.display());
        }
        Command::Version => println!("driftwatch {}", driftwatch::VERSION),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit_code::CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("driftwatch: {e}");
            ExitCode::from(pipeline::exit_code_for(&e) as u8)
        }
    }
}
