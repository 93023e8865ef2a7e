//! `uavcast` — optimize, simulate and sweep UAV video-broadcast scenarios.
//!
//! Exit codes: 0 success, 1 other errors, 2 infeasible scenario,
//! 3 optimizer stopped before converging.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use uavcast::harness::{self, Config, PsnrMode, RunStatus, SweepParam};
use uavcast::Error;

#[derive(Parser)]
#[command(name = "uavcast", version, about = "Max-min PSNR power and trajectory optimization for UAV video broadcast")]
struct Cli {
    /// Log more (repeat for debug output). RUST_LOG overrides this.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (TOML). Defaults to the built-in scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario seed (user placement, synthetic source, noise).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Analytic,
    Montecarlo,
}

impl From<Mode> for PsnrMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Analytic => PsnrMode::Analytic,
            Mode::Montecarlo => PsnrMode::Montecarlo,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize powers and trajectory and write the run artifacts.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// How psnr.csv is filled.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Monte-Carlo trials per user.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Optimize, then measure every user's PSNR by Monte-Carlo transmission.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run one optimization per value of K, E_t or N.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Parameter to vary: K, E_t or N.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Write the configured scenario as a scenario file.
    GenScenario {
        #[command(flatten)]
        common: Common,
        /// Destination file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> anyhow::Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::from_env()?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn status_of(err: &anyhow::Error) -> RunStatus {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible(_)) => RunStatus::Infeasible,
        Some(Error::NonConvergence(_)) => RunStatus::NotConverged,
        _ => RunStatus::Failed,
    }
}

fn report(run: &harness::RunSummary, out: &Path) -> RunStatus {
    println!(
        "{}: min PSNR {:.4} dB (baseline {:.4} dB) after {} outer iterations; wrote {}",
        run.status,
        run.min_psnr_db,
        run.baseline_db,
        run.outer_iterations,
        out.display()
    );
    for (i, p) in run.user_psnr_db.iter().enumerate() {
        println!("  user {}: {:.4} dB", i + 1, p);
    }
    run.status
}

fn run(cli: Cli) -> anyhow::Result<RunStatus> {
    match cli.command {
        Command::Optimize { common, out, mode, trials } => {
            let cfg = load_config(&common)?;
            let mode = mode.map(PsnrMode::from).unwrap_or(cfg.simulation.mode);
            let trials = trials.unwrap_or(cfg.simulation.trials);
            let r = harness::run_optimize(&cfg, &out, mode, trials)?;
            Ok(report(&r, &out))
        }
        Command::Simulate { common, out, trials } => {
            let cfg = load_config(&common)?;
            let trials = trials.unwrap_or(cfg.simulation.trials);
            let r = harness::run_optimize(&cfg, &out, PsnrMode::Montecarlo, trials)?;
            for e in &r.empirical {
                println!(
                    "  user {}: empirical {:.4} dB, analytic {:.4} dB ({} trials)",
                    e.user, e.empirical_psnr_db, e.analytic_psnr_db, e.trials
                );
            }
            Ok(report(&r, &out))
        }
        Command::Sweep { common, out, param, values } => {
            let cfg = load_config(&common)?;
            let rows = harness::sweep(&cfg, param, &values, Some(&out))?;
            print!("{}", harness::sweep_summary(&rows));
            // the sweep itself succeeded; the worst member status decides the code
            let worst = rows
                .iter()
                .map(|r| r.status)
                .max_by_key(|s| match s {
                    RunStatus::Converged => 0,
                    RunStatus::NotConverged => 1,
                    RunStatus::Infeasible => 2,
                    RunStatus::Failed => 3,
                })
                .unwrap_or(RunStatus::Converged);
            Ok(worst)
        }
        Command::GenScenario { common, out } => {
            let cfg = load_config(&common)?;
            let text = harness::gen_scenario(&cfg)?;
            match out {
                Some(p) => {
                    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                    }
                    harness::write_atomic(&p, text.as_bytes())?;
                    println!("wrote {}", p.display());
                }
                None => print!("{text}"),
            }
            Ok(RunStatus::Converged)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(status_of(&e).exit_code() as u8)
        }
    }
}
