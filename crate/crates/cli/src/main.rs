mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::Invalid;
use config::{Overrides, RunConfig};
use manifest::{now_unix, RunManifest};

/// Interaction discovery with covariate-dependent random partitions.
///
/// Exit status: 0 on success, 1 for invalid configuration or inputs, 2 when
/// some cells of a sweep or study failed or a run could not finish.
#[derive(Parser, Debug)]
#[command(name = "raid", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Bins for continuous covariates, 2 or 3.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(2..=3))]
    bins: Option<u8>,
    /// Predictive draws per group.
    #[arg(long, global = true)]
    pred_draws: Option<usize>,
    #[arg(long, global = true)]
    permutations: Option<usize>,
    /// Keep only pairs containing one of these columns.
    #[arg(long, global = true, value_delimiter = ',')]
    filter_cols: Option<Vec<String>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the partition model; writes draws and an LPML report.
    Fit,
    /// Mine rules over stored draws and rank covariate pairs.
    Discover,
    /// Test a pair or triple of covariates on predictive draws.
    Test {
        #[arg(long, value_delimiter = ',', required = true)]
        columns: Vec<String>,
    },
    /// Fit, discover and test candidates in one go.
    Run,
    /// Run the pipeline over a grid of prior configurations.
    Sweep,
    /// Replicated simulation study.
    Simulate,
    /// Density grid from a saved test report.
    Density {
        #[arg(long)]
        report: PathBuf,
    },
    /// Re-run a command from its manifest.
    Replay { manifest: PathBuf },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        workers: cli.workers,
        bins: cli.bins.map(usize::from),
        pred_draws: cli.pred_draws,
        permutations: cli.permutations,
        filter_cols: cli.filter_cols.clone(),
    });
    cfg.derive_seeds();
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<usize> {
    let (name, args, cfg) = match &cli.command {
        Command::Replay { manifest } => {
            let m = RunManifest::read(manifest).context(Invalid)?;
            let mut cfg = m.config;
            if let Some(d) = &cli.out_dir {
                cfg.out_dir = d.clone();
            }
            (m.command, m.args, cfg)
        }
        cmd => {
            let mut cfg = resolve(&cli).context(Invalid)?;
            let (name, args) = match cmd {
                Command::Fit => ("fit", vec![]),
                Command::Discover => ("discover", vec![]),
                Command::Test { columns } => {
                    cfg.test_columns = columns.clone();
                    ("test", vec![])
                }
                Command::Run => ("run", vec![]),
                Command::Sweep => ("sweep", vec![]),
                Command::Simulate => ("simulate", vec![]),
                Command::Density { report } => ("density", vec![report.display().to_string()]),
                Command::Replay { .. } => unreachable!(),
            };
            (name.to_string(), args, cfg)
        }
    };
    cfg.validate().context(Invalid)?;
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let started = now_unix();
    let outcome = commands::dispatch(&name, &args, &cfg)?;
    RunManifest::new(&name, args, &cfg, started, outcome.artifacts).write(&cfg.out_dir)?;
    Ok(outcome.failures)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("raid: {n} cell(s) failed; partial results written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("raid: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
