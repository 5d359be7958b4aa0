//! `svrec`: simulate → reconstruct / meta-train → render → evaluate.
//!
//! Exit codes: 0 success, 2 malformed input or configuration, 3 numeric
//! failure (divergence), 4 contract violation.

mod case;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svrec::error::{Error, Result};

#[derive(Parser)]
#[command(name = "svrec", version, about = "Slice-to-volume reconstruction with coordinate networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate phantom cases: stacks, ground truth and the source phantom.
    Simulate {
        #[arg(long)]
        phantom_seed: u64,
        /// Motion corruption factor (ranges ±6μ degrees, ±4μ mm).
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 3)]
        stacks: usize,
        #[arg(long, default_value_t = 1)]
        cases: usize,
        #[arg(long)]
        out: PathBuf,
        /// Run config whose [simulate] table sets the geometry.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Reconstruct one case: rendered volume, slice states, loss trace, model.
    Reconstruct {
        #[arg(long)]
        case: PathBuf,
        /// Meta-learned initialization; switches the budget to alpha_meta.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Accept an initialization trained for a different slice spacing.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Meta-learn an initialization over training cases.
    MetaTrain {
        #[arg(long)]
        train_dir: PathBuf,
        #[arg(long)]
        val_dir: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register a reconstruction to a reference and report PSNR/SSIM/NCC
    /// (JSON report plus a table-row CSV next to it).
    Evaluate {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Ground truth JSON; restricts metrics to the phantom mask.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Slice states to score against the truth (needs --truth).
        #[arg(long, requires = "truth")]
        states: Option<PathBuf>,
        /// Label of the method column in the CSV row.
        #[arg(long, default_value = "svrec")]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a trained model on an isotropic grid.
    Render {
        #[arg(long)]
        model: PathBuf,
        /// Grid spacing in mm.
        #[arg(long)]
        spacing: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads() -> Result<()> {
    match std::env::var("SVREC_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("SVREC_THREADS={v:?} is not a thread count")))?;
            svrec::par::set_threads(n)
        }
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Simulate { phantom_seed, mu, stacks, cases, out, config } => {
            commands::simulate(&commands::SimulateArgs { seed: phantom_seed, mu, stacks, cases, out, config })
        }
        Command::Reconstruct { case, init, force, config, out } => {
            commands::reconstruct(&case, init.as_deref(), force, &config, &out)
        }
        Command::MetaTrain { train_dir, val_dir, config, out } => commands::meta_train_cmd(&train_dir, &val_dir, &config, &out),
        Command::Evaluate { recon, reference, truth, states, method, out } => commands::evaluate(&commands::EvaluateArgs {
            recon: &recon,
            reference: &reference,
            truth: truth.as_deref(),
            states: states.as_deref(),
            method: &method,
            out: &out,
        }),
        Command::Render { model, spacing, out } => commands::render_cmd(&model, spacing, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svrec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
