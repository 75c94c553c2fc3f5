mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evcast::eval::MetricScale;
use evcast::models::ModelKind;

use crate::config::Overrides;

/// Invalid invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "evcast",
    version,
    about = "Forecast hourly EV charging load with a Bi-LSTM/autoencoder/transformer model and benchmarks",
    after_help = "Flags override the matching keys of the --config file. Exit status: 0 success, 1 runtime or data error, 2 usage error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Aggregate a charging-sessions CSV into an hourly load CSV.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per horizon and run, saving checkpoints and test metrics.
    Train(RunArgs),
    /// Grid-search the four tuned hyperparameters on the validation split.
    Grid(RunArgs),
    /// Score a checkpoint on the test split of a data file.
    Eval {
        /// Checkpoint to evaluate.
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Forecast the hours following the end of a data file.
    Predict {
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Aggregate run results under the output directory into comparison reports.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic daily + weekly load fixture as an hourly CSV.
    #[command(hide = true)]
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        hours: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hourly load CSV (`timestamp,load_kwh`) or charging-sessions CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    model: Option<ModelKind>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_parser = parse_scale)]
    scale: Option<MetricScale>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            data: self.data.clone(),
            out: self.out.clone(),
            model: self.model,
            horizon: self.horizon,
            runs: self.runs,
            seed: self.seed,
            jobs: self.jobs,
            scale: self.scale,
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = ModelKind::ALL.iter().map(|k| k.name()).collect();
        format!("expected one of {}", names.join("|"))
    })
}

fn parse_scale(s: &str) -> Result<MetricScale, String> {
    match s {
        "normalized" => Ok(MetricScale::Normalized),
        "kwh" => Ok(MetricScale::Kwh),
        _ => Err("expected normalized|kwh".into()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { data, out } => commands::ingest(&data, &out),
        Command::Train(args) => commands::train(commands::resolve(&args.config, args.overrides())?),
        Command::Grid(args) => commands::grid(commands::resolve(&args.config, args.overrides())?),
        Command::Eval { checkpoint, run } => {
            commands::eval(&checkpoint, commands::resolve(&run.config, run.overrides())?, run.horizon)
        }
        Command::Predict { checkpoint, run } => {
            commands::predict(&checkpoint, commands::resolve(&run.config, run.overrides())?)
        }
        Command::Report { out } => commands::report(&out),
        Command::MakeSynthetic { out, hours, seed } => commands::make_synthetic(&out, hours, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
