//! `occkit` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod args;
mod commands;
mod config;
mod selftest;

use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::Parser;
use thiserror::Error;

use args::{Cli, Command};
use config::FileConfig;

/// Invalid flag combination detected after parsing.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    match cli.threads.or(cfg.threads) {
        Some(0) => return Err(UsageError("--threads must be >= 1".into()).into()),
        Some(n) => pool = pool.num_threads(n),
        None => {}
    }
    let pool = pool.build()?;
    pool.install(|| match &cli.command {
        Command::GenMask(a) => commands::gen_mask(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::Bins(a) => commands::bins(a, &cfg),
        Command::Warp(a) => commands::warp(a, &cfg),
        Command::WarpOcc(a) => commands::warp_occ(a, &cfg),
        Command::Synth(a) => commands::synth(a, &cfg),
        Command::Selftest(a) => {
            if selftest::run(a.seed.or(cfg.seed).unwrap_or(0))? {
                Ok(())
            } else {
                Err(anyhow!("selftest failed"))
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version go to stdout and are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<UsageError>() { 1 } else { 2 })
        }
    }
}
