//! Experiment runner: train, evaluate, sweep, two-layer, frontier.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Mortgage ecosystem simulator and product-design lab.
#[derive(Parser)]
#[command(name = "mortsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProductArgs {
    /// Upfront premium as a fraction of the monthly payment, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    p0: f64,
    /// Monthly fee as a fraction of the monthly payment, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pt: f64,
    /// Cover in months of payment, in [0, episode length].
    #[arg(long, default_value_t = 0.0)]
    v: f64,
    /// Product forbearance months (0 when absent).
    #[arg(long, default_value_t = 0)]
    forbearance: u32,
    /// Well-known shape instead of raw parameters: mra, matched-mra, covid,
    /// or null.
    #[arg(long)]
    special: Option<String>,
    /// Dollar amount for mra / matched-mra.
    #[arg(long)]
    amount: Option<f64>,
    /// Pause length for covid (3, 6, or 12).
    #[arg(long)]
    months: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the product-conditioned borrower policy.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default `runs/train`).
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's iteration count.
        #[arg(long)]
        iterations: Option<u32>,
        /// Collect rollouts in parallel (deterministic either way).
        #[arg(long)]
        parallel: bool,
    },
    /// Evaluate a checkpoint's policy for one product across the shock grid.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "runs/evaluate")]
        out: PathBuf,
        /// Optional config path; must match the checkpoint fingerprint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        product: ProductArgs,
        /// Comma-separated shock sizes (default: the full grid -1.0..0.0).
        #[arg(long, allow_hyphen_values = true)]
        shocks: Option<String>,
        /// Skip integrated metrics (required for partial grids).
        #[arg(long)]
        no_integrate: bool,
        /// Label used in output file names.
        #[arg(long, default_value = "product")]
        tag: String,
        /// Write every episode trace as JSON-lines under <out>/traces/.
        #[arg(long)]
        dump_traces: bool,
        #[arg(long)]
        parallel: bool,
    },
    /// Sample n products, evaluate each, and extract the frontier.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
        /// Number of products to sample.
        #[arg(long, default_value_t = 100)]
        products: u32,
        /// Sample from the theta stored in a two-layer checkpoint instead of
        /// the full box.
        #[arg(long)]
        theta_from: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
    },
    /// Run the two-layer loop (inner policy learning, outer product design).
    TwoLayer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs/two_layer")]
        out: PathBuf,
        /// fixed or adaptive; overrides the config.
        #[arg(long)]
        mode: Option<String>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Run at most this many new iterations, then checkpoint and stop.
        #[arg(long)]
        max_iterations: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallel: bool,
    },
    /// Recompute the Pareto frontier of a sweep results file.
    Frontier {
        /// A CSV produced by `sweep` (columns social_index_int, cost_int).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out, seed, iterations, parallel } => {
            commands::cmd_train(&config, &out, seed, iterations, parallel)
        }
        Command::Evaluate {
            checkpoint,
            out,
            config,
            product,
            shocks,
            no_integrate,
            tag,
            dump_traces,
            parallel,
        } => commands::cmd_evaluate(
            &checkpoint,
            &out,
            config.as_deref(),
            &product,
            shocks.as_deref(),
            no_integrate,
            &tag,
            dump_traces,
            parallel,
        ),
        Command::Sweep { checkpoint, out, products, theta_from, parallel } => {
            commands::cmd_sweep(&checkpoint, &out, products, theta_from.as_deref(), parallel)
        }
        Command::TwoLayer { config, out, mode, resume, max_iterations, seed, parallel } => {
            commands::cmd_two_layer(
                &config,
                &out,
                mode.as_deref(),
                resume,
                max_iterations,
                seed,
                parallel,
            )
        }
        Command::Frontier { input, out } => commands::cmd_frontier(&input, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(err.exit_code())
        }
    }
}
