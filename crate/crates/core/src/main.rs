use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nslb::config::{Experiment, ExperimentConfig};
use nslb::experiments::{run, RunOptions};

/// Desk-scale Navier-Stokes singularity laboratory.
#[derive(Debug, Parser)]
#[command(name = "nslb", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the config `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(threads) = std::env::var("NSLB_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: NSLB_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }

    let cfg = match ExperimentConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(named) = cfg.experiment {
        if named != cli.experiment {
            eprintln!(
                "error: config names experiment `{}` but `{}` was requested",
                named.name(),
                cli.experiment.name()
            );
            return ExitCode::from(2);
        }
    }
    let out_dir = cli
        .out
        .or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out").join(cli.experiment.name()));
    let base_dir = cli
        .config
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let opts = RunOptions {
        out_dir,
        base_dir,
        seed: cli.seed,
    };

    match run(cli.experiment, &cfg, &opts) {
        Ok(report) => {
            for check in &report.checks {
                let verdict = if check.pass { "PASS" } else { "FAIL" };
                println!("{verdict} {} measured={:e} threshold={:e}", check.name, check.measured, check.threshold);
            }
            println!("report: {}", opts.out_dir.join("report.json").display());
            let failures = report.failures();
            if failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed invariants: {}", failures.join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
