use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use rbnn::ModelKind;
use rbnn_cli::commands::{format_predictions, parse_topology};
use rbnn_cli::{run_compare, run_params, run_predict, run_train, ExperimentConfig, ExperimentOutcome};

#[derive(Parser)]
#[command(
    name = "rbnn",
    version,
    about = "Train and compare restricted Bayesian neural networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score RBNN candidates on one thread. Results are identical.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write losscurve.csv, results.json and model.json.
    Train(RunArgs),
    /// Train several models on one shared split.
    Compare(RunArgs),
    /// Print the stored parameter count of a model kind.
    Params {
        /// rbnn, ffnn or bnn.
        #[arg(long)]
        model: ModelKind,
        /// Layer sizes, input first, e.g. 8,2,2,2.
        #[arg(long)]
        topology: String,
        /// Count a bias row per layer.
        #[arg(long)]
        bias: bool,
    },
    /// Classify rows with a saved model.
    Predict {
        /// A model.json written by train or compare.
        #[arg(long)]
        model: PathBuf,
        /// CSV file, or inline rows such as "5.1,3.5,1.4,0.2;6.7,3.0,5.2,2.3".
        #[arg(long)]
        input: String,
    },
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed).with_parallel(!args.serial);
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn report(outcome: &ExperimentOutcome) {
    eprintln!(
        "split {} ({} train / {} test rows)",
        outcome.data.split_checksum,
        outcome.data.train.len(),
        outcome.data.test.len()
    );
    for run in &outcome.runs {
        let r = &run.results;
        eprintln!(
            "{}: test accuracy {:.4}, train accuracy {:.4}, {} parameters, {} iterations, {:.2}s",
            r.model, r.final_test_accuracy, r.final_train_accuracy, r.params_stored, r.iterations, r.wall_time_seconds
        );
    }
    eprintln!("wrote {}", outcome.output_dir.display());
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => report(&run_train(&load(&args)?)?),
        Command::Compare(args) => report(&run_compare(&load(&args)?)?),
        Command::Params { model, topology, bias } => {
            println!("{}", run_params(model, &parse_topology(&topology)?, bias)?);
        }
        Command::Predict { model, input } => {
            let (names, preds) = run_predict(&model, &input)?;
            print!("{}", format_predictions(&names, &preds)?);
        }
    }
    Ok(())
}
