//! `bench`: run experiment sweeps, list estimators, run the acceptance suite.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use robustlearn::harness::{self, Estimator, ExperimentConfig, SweepOptions};
use robustlearn::selftest::{self, SelftestOptions};

#[derive(Parser)]
#[command(name = "bench", version, about = "Robust estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a JSON config and write one CSV row per trial.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record wall time per trial (rows are then no longer reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Print the estimator names accepted in configs.
    ListEstimators,
    /// Run the acceptance criteria, one line each.
    Selftest {
        /// Comma-separated criterion numbers; default is all.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
        /// Treat known failures as failures.
        #[arg(long)]
        strict: bool,
    },
}

fn run(config: PathBuf, out: PathBuf, timing: bool) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(&config)
        .with_context(|| format!("loading {}", config.display()))?;
    cfg.validate()?;
    let opts = SweepOptions::from_env(timing)?;
    let rows = harness::run_sweep(&cfg, opts)?;
    let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    harness::write_csv(&rows, BufWriter::new(file))?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn selftest(only: Vec<usize>, strict: bool) -> anyhow::Result<bool> {
    let known: BTreeSet<usize> = selftest::CRITERIA.iter().map(|c| c.0).collect();
    if let Some(bad) = only.iter().find(|id| !known.contains(id)) {
        anyhow::bail!("no criterion {bad}");
    }
    let opts = SelftestOptions {
        only: only.into_iter().collect(),
        workers: SweepOptions::from_env(false)?.workers,
    };
    let reports = selftest::run(&opts, |r| println!("{}", r.line()));
    let failed = reports.iter().filter(|r| !r.pass).count();
    let known_failed = reports.iter().filter(|r| r.is_known_failure()).count();
    println!(
        "selftest: {} passed, {failed} failed ({known_failed} known)",
        reports.len() - failed
    );
    Ok(if strict { failed == 0 } else { failed == known_failed })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, timing } => run(config, out, timing).map(|_| true),
        Command::ListEstimators => {
            for e in Estimator::ALL {
                println!("{:<24}{}", e.name(), e.description());
            }
            Ok(true)
        }
        Command::Selftest { only, strict } => selftest(only, strict),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
