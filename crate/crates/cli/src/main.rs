//! `vrfbml`: simulate VRFB stack temperatures, train regressors on the
//! resulting series, evaluate them and assemble comparison tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CmdResult, WithCode, EXIT_CONFIG};
use config::{resolve_seed, RunConfig};
use vrfbml::ModelKind;

#[derive(Parser, Debug)]
#[command(
    name = "vrfbml",
    version,
    about = "VRFB thermal simulation and temperature regression"
)]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for noise and split; overrides VRFBML_SEED and the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the default configuration as JSON and exit.
    #[arg(long)]
    print_default_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate and simulate scenarios without noise.
    Simulate {
        /// Scenario id; all configured scenarios when omitted.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Simulate scenarios and add seeded Gaussian measurement noise.
    Synth {
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Split a dataset and fit one or all model kinds.
    Train {
        /// Dataset CSV.
        dataset: PathBuf,
        /// Model kind; all three when omitted.
        #[arg(long)]
        model: Option<ModelKind>,
    },
    /// Score a trained model on the held-out partition it was split with.
    Evaluate {
        model_file: PathBuf,
        dataset: PathBuf,
        /// Score the training partition instead of the test partition.
        #[arg(long)]
        train_partition: bool,
    },
    /// Merge evaluation reports into a comparison table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Append mean-temperature comparison sections.
        #[arg(long)]
        means: bool,
    },
}

fn run(cli: Cli) -> CmdResult {
    if cli.print_default_config {
        let mut text = serde_json::to_string_pretty(&RunConfig::default()).code(EXIT_CONFIG)?;
        text.push('\n');
        print!("{text}");
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(anyhow::anyhow!("no command given; see `vrfbml --help`")).code(EXIT_CONFIG);
    };
    let mut config = RunConfig::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    if let Some(seed) = resolve_seed(cli.seed).code(EXIT_CONFIG)? {
        config.override_seed(seed);
    }
    let out = cli.out.unwrap_or_else(|| config.output_dir.clone());
    match command {
        Command::Simulate { scenario } => {
            commands::simulate(&config, scenario.as_deref(), &out).map(drop)
        }
        Command::Synth { scenario } => {
            commands::synth(&config, scenario.as_deref(), &out).map(drop)
        }
        Command::Train { dataset, model } => {
            let kinds = match model {
                Some(k) => vec![k],
                None => ModelKind::ALL.to_vec(),
            };
            commands::train(&config, &dataset, &kinds, &out).map(drop)
        }
        Command::Evaluate {
            model_file,
            dataset,
            train_partition,
        } => {
            let partition = if train_partition { "train" } else { "test" };
            commands::evaluate(&config, &model_file, &dataset, partition, &out).map(drop)
        }
        Command::Report { reports, means } => commands::report(&reports, means, &out).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("vrfbml: error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
