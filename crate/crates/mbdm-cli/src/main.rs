//! `mbdm`: train, sample, evaluate and plot manually bridged diffusion
//! models.
//!
//! Exit codes: 0 success, 2 usage/config errors, 3 data validation
//! errors, 4 numeric failures.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mbdm", version, about = "Constrained diffusion models with manual bridges")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run configuration.
    Train {
        /// Run configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints, metrics and the resolved
        /// configuration.
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint (its config hash must match).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Draw samples from a trained model, the bridge prior, or a guided
    /// model.
    Sample {
        /// Checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run configuration; defaults to `config.resolved.cfg` next to
        /// the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the sampling mode (model|prior|guidance).
        #[arg(long)]
        mode: Option<String>,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Integration steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Solver (em|heun).
        #[arg(long)]
        solver: Option<String>,
        /// Churn strength for the Heun solver.
        #[arg(long)]
        churn: Option<f64>,
        /// Sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute infraction and distribution metrics for a sample CSV.
    Eval {
        /// Samples CSV (as written by `sample`).
        #[arg(long)]
        samples: PathBuf,
        /// Reference CSV; defaults to the configured dataset.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Run configuration defining the constraints.
        #[arg(long)]
        config: PathBuf,
        /// Optional checkpoint for the r-ELBO column.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Optional CSV report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a scatter plot over the constraint mask as a PPM image.
    Plot {
        /// Samples CSV.
        #[arg(long)]
        samples: PathBuf,
        /// Run configuration defining the constraints.
        #[arg(long)]
        config: PathBuf,
        /// Output image (binary PPM).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 600)]
        width: usize,
        #[arg(long, default_value_t = 600)]
        height: usize,
        /// Plot bounds as `xmin,xmax,ymin,ymax`; derived from the
        /// constraints or data when omitted.
        #[arg(long)]
        bounds: Option<String>,
    },
    /// Generate the configured dataset and write it as CSV.
    Gen {
        /// Run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    mbdm_core::configure_threads_from_env();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            out,
            resume,
        } => commands::train(&config, &out, resume.as_deref()),
        Command::Sample {
            checkpoint,
            config,
            mode,
            n,
            steps,
            solver,
            churn,
            seed,
            out,
        } => commands::sample(commands::SampleArgs {
            checkpoint,
            config,
            mode,
            n,
            steps,
            solver,
            churn,
            seed,
            out,
        }),
        Command::Eval {
            samples,
            reference,
            config,
            checkpoint,
            out,
        } => commands::eval(
            &samples,
            reference.as_deref(),
            &config,
            checkpoint.as_deref(),
            out.as_deref(),
        ),
        Command::Plot {
            samples,
            config,
            out,
            width,
            height,
            bounds,
        } => commands::plot(&samples, &config, &out, width, height, bounds.as_deref()),
        Command::Gen { config, out } => commands::gen(&config, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
