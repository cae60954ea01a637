//! `tradeoff-lab`: audits, closed-form analysis and training sweeps for the
//! trade-off between standard and adversarial risk.
//!
//! Exit codes: 0 when every audit passes, 2 when an inequality audit fails,
//! 1 on usage, config or computation errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Result};
use clap::Parser;

mod commands;
mod config;
mod output;
mod patterns;

use commands::Command;

#[derive(Debug, Parser)]
#[command(name = "tradeoff-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config; omitted keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config value by dotted path, e.g. `--set audit_cor3.n=1000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "TRADEOFF_LAB_THREADS")]
    threads: Option<usize>,

    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<i32> {
    let cfg = config::load(cli.config.as_deref(), &cli.set, cli.seed)?;
    if let Some(t) = cli.threads {
        ensure!(t >= 1, "--threads must be >= 1");
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let block = cli.command.config_block(&cfg)?;
    let hash = config::hash_json(&block);
    let outcome = cli.command.run(&cfg)?;

    let dir = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    output::write_all(&dir, cli.command.name(), &hash, cfg.seed, &block, &outcome)?;
    let code = outcome.exit_code();
    println!(
        "{}: {} rows, config {hash}, {} -> {}",
        cli.command.name(),
        outcome.rows.len(),
        match code {
            0 => "pass",
            2 => "AUDIT FAILED",
            _ => "COMPUTATION FAILED",
        },
        dir.display()
    );
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
