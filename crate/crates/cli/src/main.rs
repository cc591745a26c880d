//! `uae` — train, evaluate, and probe uncertainty autoencoders from the
//! command line. Every subcommand takes a seed, writes a JSON run manifest
//! before any artifact, and produces byte-identical outputs on reruns with
//! identical manifests. `UAE_THREADS` caps internal parallelism.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "uae", version, about = "Uncertainty autoencoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a UAE (optionally norm-constrained, frozen, or random-encoder).
    Train(commands::TrainArgs),
    /// Reconstruct a test split through the noisy channel and report l2.
    Eval(commands::EvalArgs),
    /// LASSO baseline with a random Gaussian matrix, lambda tuned on the
    /// validation split.
    Lasso(commands::LassoArgs),
    /// PCA baseline: components, scatter-matrix diagnostic, kNN probe.
    Pca(commands::PcaArgs),
    /// Draw from the Gibbs chain of a trained model.
    Sample(commands::SampleArgs),
    /// Transfer a source checkpoint to a target dataset (SE or SD mode).
    Transfer(commands::TransferArgs),
    /// Compare UAE and PCA projections through a kNN probe.
    Dimreduce(commands::DimreduceArgs),
    /// Check backprop against central finite differences on random models.
    Gradcheck(commands::GradcheckArgs),
    /// Generate a synthetic desk-scale IDX dataset.
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("UAE_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => uae_core::par::configure_threads(n),
            _ => {
                eprintln!("error: UAE_THREADS must be a positive integer, got '{threads}'");
                return ExitCode::FAILURE;
            }
        }
    }

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::cmd_train(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Lasso(args) => commands::cmd_lasso(args),
        Command::Pca(args) => commands::cmd_pca(args),
        Command::Sample(args) => commands::cmd_sample(args),
        Command::Transfer(args) => commands::cmd_transfer(args),
        Command::Dimreduce(args) => commands::cmd_dimreduce(args),
        Command::Gradcheck(args) => commands::cmd_gradcheck(args),
        Command::Synth(args) => commands::cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
