//! `unroll`: experiment runner over `unroll-core`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O or
//! malformed file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unroll_core::Error;

use crate::config::Experiment;

#[derive(Parser)]
#[command(name = "unroll", version, about = "Unrolled primal-dual reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Master seed (overrides seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parameter checkpoint to start from.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Phantom, counts, log sinogram and FBP image.
    Simulate,
    /// Run the configured network on one measurement.
    Reconstruct,
    /// Supervised training on simulated Shepp-Logan data.
    Train,
    /// Self-supervised adaptation to one noise-mismatched measurement.
    Adapt,
    /// Monte-Carlo check of the error bounds on a small instance.
    Verify,
    /// PSNR and SSIM of a reconstruction against a reference.
    Metrics {
        #[arg(long)]
        recon: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Dimension { .. } | Error::OutOfRange { .. } | Error::Unsupported(_) => 2,
        Error::Numeric(_) => 3,
        Error::Io(_) | Error::Format(_) => 4,
    }
}

fn load(cli: &Cli) -> unroll_core::Result<Experiment> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut exp = Experiment::parse(&text)?;
    if let Some(s) = cli.seed {
        exp = exp.with_seed(s)?;
    }
    if let Some(o) = &cli.out {
        exp = exp.with_out(o)?;
    }
    if let Command::Metrics { recon, reference } = &cli.command {
        if let Some(p) = recon {
            exp.metrics_recon = Some(p.clone());
        }
        if let Some(p) = reference {
            exp.metrics_reference = Some(p.clone());
        }
    }
    Ok(exp)
}

fn run(cli: &Cli) -> unroll_core::Result<()> {
    let exp = load(cli)?;
    let ckpt = cli.checkpoint.as_deref();
    match cli.command {
        Command::Simulate => commands::simulate(&exp),
        Command::Reconstruct => commands::reconstruct(&exp, ckpt),
        Command::Train => commands::train_cmd(&exp, ckpt),
        Command::Adapt => commands::adapt_cmd(&exp, ckpt),
        Command::Verify => commands::verify(&exp),
        Command::Metrics { .. } => commands::metrics(&exp),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
