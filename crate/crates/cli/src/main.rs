use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use elc_cli::commands::{self, GridAxis, RunOptions, Source, SweepOptions, VerifyOptions};

/// Leader-following consensus simulator for networked Euler-Lagrange agents.
#[derive(Debug, Parser)]
#[command(name = "elc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Scenario file (TOML).
    config: Option<PathBuf>,
    /// Use the bundled four-arm example instead of a file.
    #[arg(long)]
    builtin_example: bool,
    /// `key=value` assignment applied to the scenario, e.g. `integrator.h=0.002`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for random initial positions and velocities.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation horizon in seconds.
    #[arg(long)]
    horizon: Option<f64>,
}

impl From<SourceArgs> for Source {
    fn from(a: SourceArgs) -> Self {
        Source {
            config: a.config,
            builtin: a.builtin_example,
            overrides: a.overrides,
            seed: a.seed,
            horizon: a.horizon,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate and write trajectory.csv, report.txt and report.kv.
    Run {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write tracking.svg and observer.svg.
        #[arg(long)]
        plot: bool,
    },
    /// Check joint connectivity of the switching schedule.
    CheckGraph {
        #[command(flatten)]
        source: SourceArgs,
        /// Window length; defaults to the scenario's `network.epsilon`.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run the randomized plant-property and observer checks.
    Verify {
        #[command(flatten)]
        source: SourceArgs,
        /// Random states per plant property.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Run a parameter grid and write sweep.csv.
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        /// `key=v1,v2,...`; repeat for more axes.
        #[arg(long)]
        grid: Vec<GridAxis>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ELC_LOG_LEVEL", "warn")).init();
    let code = match Cli::parse().command {
        Command::Run { source, out, plot } => commands::run(&RunOptions {
            source: source.into(),
            out,
            plot,
        }),
        Command::CheckGraph { source, eps } => commands::check_graph(&source.into(), eps),
        Command::Verify { source, samples } => {
            let seed = source.seed.unwrap_or(elc::scenario::DEFAULT_SEED);
            commands::verify(&source.into(), VerifyOptions { samples, seed })
        }
        Command::Sweep {
            source,
            grid,
            jobs,
            out,
        } => commands::sweep(&SweepOptions {
            source: source.into(),
            axes: grid,
            jobs,
            out,
        }),
    };
    ExitCode::from(code)
}
