//! Experiment orchestration: configuration, single runs, sweeps and the
//! files they leave behind.
//!
//! A run directory holds `trajectory.csv`, `power.csv`, `iterations.csv`,
//! `psnr.csv` and `summary.txt`. Every file is written to a temporary name and
//! renamed into place.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcd::{certify, feasible_start, optimize, write_iterations_csv, Certificate, OptimizeStatus, Optimization, OptimizerSettings};
use crate::error::{Error, Result};
use crate::kinematics::{write_trajectory_csv, PowerAllocation, Trajectory};
use crate::pavt::{self, monte_carlo, BlockShape, DecodeMode, EmpiricalRow, Gop, Pipeline};
use crate::power::write_power_csv;
use crate::quality::{min_psnr, psnr_all, psnr_from_mse};
use crate::scenario::{generate_users, Scenario};

/// Prefix of environment variables that override configuration keys;
/// nested keys are joined with `__`, e.g. `UAVCAST_OPTIMIZER__TOLERANCE`.
pub const ENV_PREFIX: &str = "UAVCAST_";

/// Tolerance used when re-checking constraints of a finished run.
pub const CERTIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserConfig {
    pub count: usize,
    pub x_range_m: [f64; 2],
    pub y_range_m: [f64; 2],
}

impl Default for UserConfig {
    fn default() -> Self {
        Self {
            count: 4,
            x_range_m: [0.0, 1200.0],
            y_range_m: [0.0, 1200.0],
        }
    }
}

/// Video source. Without `raw_path` a seeded synthetic GOP is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub raw_path: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            raw_path: None,
            width: pavt::CIF_WIDTH,
            height: pavt::CIF_HEIGHT,
            frames: pavt::GOP_FRAMES,
        }
    }
}

/// Changes applied on top of the base scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Complete scenario file; when set, users and source are not generated.
    pub file: Option<PathBuf>,
    pub slots: Option<usize>,
    pub total_energy_j: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsnrMode {
    Analytic,
    Montecarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub mode: PsnrMode,
    pub trials: usize,
    pub decode: DecodeMode,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            mode: PsnrMode::Analytic,
            trials: 50,
            decode: DecodeMode::ZeroForcing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub users: UserConfig,
    pub source: SourceConfig,
    pub optimizer: OptimizerSettings,
    pub simulation: SimulationConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            scenario: ScenarioConfig::default(),
            users: UserConfig::default(),
            source: SourceConfig::default(),
            optimizer: OptimizerSettings::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl Config {
    /// Parses TOML text, then applies `(key, value)` overrides such as
    /// `("UAVCAST_OPTIMIZER__MAX_OUTER", "20")`. Keys without the prefix are
    /// ignored. `origin` names the source in diagnostics.
    pub fn from_toml_with_env<I>(text: &str, origin: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v)))
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path: Vec<&str> = key.split("__").collect();
            let (last, parents) = path.split_last().expect("split yields one item");
            let mut node = &mut table;
            for p in parents {
                node = node
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("{ENV_PREFIX}{}: `{p}` is not a table", key.to_ascii_uppercase())))?;
            }
            node.insert(last.to_string(), parse_env_value(&raw));
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{origin}: {e}")))
    }

    /// Reads a config file with environment overrides; relative paths inside
    /// it are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_with_env(&text, &path.display().to_string(), std::env::vars())?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scenario.file, &mut cfg.source.raw_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Defaults with environment overrides only.
    pub fn from_env() -> Result<Self> {
        Self::from_toml_with_env("", "environment", std::env::vars())
    }

    /// The configured source GOP: a raw file or the seeded synthetic one.
    pub fn source_gop(&self) -> Result<Gop> {
        let s = &self.source;
        match &s.raw_path {
            Some(p) => Gop::load_raw(p, s.width, s.height, s.frames),
            None => Ok(Gop::synthetic(s.width, s.height, s.frames, self.seed)),
        }
    }

    /// Builds and validates the scenario this configuration describes.
    pub fn build_scenario(&self) -> Result<Scenario> {
        let mut s = match &self.scenario.file {
            Some(p) => Scenario::load(p)?,
            None => {
                let u = &self.users;
                let users = generate_users(self.seed, u.count, (u.x_range_m[0], u.x_range_m[1]), (u.y_range_m[0], u.y_range_m[1]))?;
                let spectrum = pavt::spectrum_of(&self.source_gop()?, BlockShape::CIF, 180)?;
                Scenario::table_one(users, spectrum)
            }
        };
        if let Some(k) = self.scenario.slots {
            set_slots(&mut s, k);
        }
        if let Some(e) = self.scenario.total_energy_j {
            s.total_energy = e;
        }
        s.validate()?;
        Ok(s)
    }
}

/// Changes the slot count, keeping one block per slot and the straight-flight
/// boundary velocity.
pub fn set_slots(s: &mut Scenario, k: usize) {
    s.slots = k;
    s.spectrum.kept = k;
    s.v0 = s.cruise_velocity();
}

/// Worst-user PSNR of straight flight with equal powers that exhaust the
/// available communication energy.
pub fn baseline(scenario: &Scenario) -> Result<f64> {
    let (traj, power) = feasible_start(scenario)?;
    Ok(min_psnr(scenario, &traj, &power)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
    Infeasible,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Converged => 0,
            RunStatus::Infeasible => 2,
            RunStatus::NotConverged => 3,
            RunStatus::Failed => 1,
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::NotConverged => "not_converged",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Failed => "failed",
        })
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: RunStatus,
    pub min_psnr_db: f64,
    pub baseline_db: f64,
    pub user_psnr_db: Vec<f64>,
    pub outer_iterations: usize,
    pub certificate: Certificate,
    pub optimization: Optimization,
    pub empirical: Vec<EmpiricalRow>,
}

/// Optimizes `scenario` and re-certifies the result. A solution that fails
/// certification is reported as an error rather than a success.
pub fn run_scenario(scenario: &Scenario, settings: &OptimizerSettings) -> Result<RunSummary> {
    let baseline_db = baseline(scenario)?;
    let opt = optimize(scenario, settings)?;
    let certificate = certify(scenario, &opt.traj, &opt.power, CERTIFY_TOL)?;
    if !certificate.ok() {
        return Err(Error::Solver(format!("solution failed certification: {}", certificate.violations.join("; "))));
    }
    let user_psnr_db = psnr_all(scenario, &opt.traj, &opt.power)?;
    Ok(RunSummary {
        status: match opt.status {
            OptimizeStatus::Converged => RunStatus::Converged,
            OptimizeStatus::MaxOuter => RunStatus::NotConverged,
        },
        min_psnr_db: opt.mu_db(),
        baseline_db,
        user_psnr_db,
        outer_iterations: opt.outer_iterations(),
        certificate,
        optimization: opt,
        empirical: Vec::new(),
    })
}

/// Monte-Carlo PSNR of every user for a given solution.
pub fn simulate_users(
    config: &Config,
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerAllocation,
    trials: usize,
) -> Result<Vec<EmpiricalRow>> {
    let pipeline = Pipeline::new(config.source_gop()?, BlockShape::CIF, config.seed)?;
    (0..scenario.users.len())
        .map(|n| monte_carlo(&pipeline, scenario, traj, power, n, config.seed, config.simulation.decode, trials))
        .collect()
}

fn analytic_rows(scenario: &Scenario, traj: &Trajectory, power: &PowerAllocation, decode: DecodeMode) -> Result<Vec<EmpiricalRow>> {
    (0..scenario.users.len())
        .map(|n| {
            let mse = crate::quality::mse(scenario, traj, power, n)?;
            Ok(EmpiricalRow {
                user: n + 1,
                mode: decode,
                empirical_mse: f64::NAN,
                analytic_mse: mse,
                empirical_psnr_db: f64::NAN,
                analytic_psnr_db: psnr_from_mse(mse, scenario.pixel_peak),
                trials: 0,
            })
        })
        .collect()
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Table of per-user PSNRs with the minimum marked.
pub fn summary_text(scenario: &Scenario, run: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "status: {}", run.status);
    let _ = writeln!(s, "users: {}  slots: {}  total energy: {} J", scenario.users.len(), scenario.slots, scenario.total_energy);
    let _ = writeln!(s, "outer iterations: {}", run.outer_iterations);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<6} {:>10} {:>10} {:>12}", "user", "x_m", "y_m", "psnr_db");
    let worst = run
        .user_psnr_db
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b })
        .0;
    for (i, (u, p)) in scenario.users.iter().zip(&run.user_psnr_db).enumerate() {
        let mark = if i == worst { "  <- min" } else { "" };
        let _ = writeln!(s, "{:<6} {:>10.2} {:>10.2} {:>12.4}{mark}", u.id, u.position.x, u.position.y, p);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "min PSNR: {:.4} dB", run.min_psnr_db);
    let _ = writeln!(s, "baseline (straight line, equal power): {:.4} dB", run.baseline_db);
    let _ = writeln!(s, "gain: {:.4} dB", run.min_psnr_db - run.baseline_db);
    let c = &run.certificate;
    let _ = writeln!(
        s,
        "energy: comm {:.4} J, flight {:.4} J, slack {:.6} J",
        c.comm_energy_j,
        scenario.total_energy - c.comm_energy_j - c.energy_slack_j,
        c.energy_slack_j
    );
    let _ = writeln!(s, "speed range: [{:.4}, {:.4}] m/s, max accel {:.4} m/s^2", c.min_speed, c.max_speed, c.max_accel);
    if !run.empirical.is_empty() && run.empirical.iter().all(|r| r.trials > 0) {
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<6} {:>14} {:>14} {:>8}", "user", "empirical_db", "analytic_db", "trials");
        for r in &run.empirical {
            let _ = writeln!(s, "{:<6} {:>14.4} {:>14.4} {:>8}", r.user, r.empirical_psnr_db, r.analytic_psnr_db, r.trials);
        }
    }
    s
}

/// Writes every artifact of a finished run into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, run: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let opt = &run.optimization;
    write_atomic(&dir.join("trajectory.csv"), &csv_bytes(|b| write_trajectory_csv(&opt.traj, Some(&opt.power), b))?)?;
    write_atomic(
        &dir.join("power.csv"),
        &csv_bytes(|b| write_power_csv(scenario.spectrum.kept_variances(), &opt.power, b))?,
    )?;
    write_atomic(&dir.join("iterations.csv"), &csv_bytes(|b| write_iterations_csv(&opt.trace, b))?)?;
    write_atomic(&dir.join("psnr.csv"), &csv_bytes(|b| pavt::write_psnr_csv(&run.empirical, b))?)?;
    write_atomic(&dir.join("summary.txt"), summary_text(scenario, run).as_bytes())?;
    Ok(())
}

/// Optimizes the configured scenario, optionally simulates it, and writes the
/// run directory. Errors before a solution exists are returned as-is.
pub fn run_optimize(config: &Config, out: &Path, mode: PsnrMode, trials: usize) -> Result<RunSummary> {
    let scenario = config.build_scenario()?;
    let mut run = run_scenario(&scenario, &config.optimizer)?;
    let opt = &run.optimization;
    run.empirical = match mode {
        PsnrMode::Analytic => analytic_rows(&scenario, &opt.traj, &opt.power, config.simulation.decode)?,
        PsnrMode::Montecarlo => simulate_users(config, &scenario, &opt.traj, &opt.power, trials)?,
    };
    write_run(out, &scenario, &run)?;
    info!("wrote {}", out.display());
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "K")]
    Slots,
    #[serde(rename = "E_t")]
    Energy,
    #[serde(rename = "N")]
    Users,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "k" | "slots" => Ok(SweepParam::Slots),
            "e_t" | "et" | "energy" | "total_energy" => Ok(SweepParam::Energy),
            "n" | "users" => Ok(SweepParam::Users),
            _ => Err(Error::Invalid(format!("unknown sweep parameter `{s}` (expected K, E_t or N)"))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::Slots => "K",
            SweepParam::Energy => "E_t",
            SweepParam::Users => "N",
        })
    }
}

impl SweepParam {
    /// Configuration for one sweep member.
    pub fn apply(self, base: &Config, value: f64) -> Result<Config> {
        let mut c = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Invalid(format!("{self} must be a positive integer, got {v}")))
            }
        };
        match self {
            SweepParam::Slots => c.scenario.slots = Some(count(value)?),
            SweepParam::Energy => {
                if !(value > 0.0) {
                    return Err(Error::Invalid(format!("E_t must be positive, got {value}")));
                }
                c.scenario.total_energy_j = Some(value)
            }
            SweepParam::Users => {
                if c.scenario.file.is_some() {
                    return Err(Error::Invalid("N sweeps need generated users, not a scenario file".into()));
                }
                c.users.count = count(value)?
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub status: RunStatus,
    pub min_psnr_db: f64,
    pub baseline_db: f64,
    pub user_psnr_db: Vec<f64>,
    pub outer_iterations: usize,
    pub max_slack_gap: f64,
    pub error: Option<String>,
}

fn classify(e: &Error) -> RunStatus {
    match e {
        Error::Infeasible(_) => RunStatus::Infeasible,
        Error::NonConvergence(_) => RunStatus::NotConverged,
        _ => RunStatus::Failed,
    }
}

/// Runs one optimization per value (concurrently); member failures are
/// recorded and do not stop the sweep. With `out`, each member's artifacts go
/// to `out/<param>_<value>/` and the table to `out/sweep.csv`.
pub fn sweep(base: &Config, param: SweepParam, values: &[f64], out: Option<&Path>) -> Result<Vec<SweepRow>> {
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&value| {
            let attempt = || -> Result<(Scenario, RunSummary)> {
                let cfg = param.apply(base, value)?;
                let scenario = cfg.build_scenario()?;
                let mut run = run_scenario(&scenario, &cfg.optimizer)?;
                let opt = &run.optimization;
                run.empirical = analytic_rows(&scenario, &opt.traj, &opt.power, cfg.simulation.decode)?;
                Ok((scenario, run))
            };
            match attempt() {
                Ok((scenario, run)) => {
                    let mut error = None;
                    if let Some(dir) = out {
                        if let Err(e) = write_run(&dir.join(format!("{param}_{value}")), &scenario, &run) {
                            error = Some(e.to_string());
                        }
                    }
                    let gaps = run.optimization.trace.iter().skip(1).map(|r| r.slack_gap).filter(|g| g.is_finite());
                    SweepRow {
                        param,
                        value,
                        status: run.status,
                        min_psnr_db: run.min_psnr_db,
                        baseline_db: run.baseline_db,
                        user_psnr_db: run.user_psnr_db,
                        outer_iterations: run.outer_iterations,
                        max_slack_gap: gaps.last().unwrap_or(0.0),
                        error,
                    }
                }
                Err(e) => {
                    warn!("{param} = {value}: {e}");
                    SweepRow {
                        param,
                        value,
                        status: classify(&e),
                        min_psnr_db: f64::NAN,
                        baseline_db: f64::NAN,
                        user_psnr_db: Vec::new(),
                        outer_iterations: 0,
                        max_slack_gap: f64::NAN,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("sweep.csv"), &csv_bytes(|b| write_sweep_csv(&rows, b))?)?;
        write_atomic(&dir.join("summary.txt"), sweep_summary(&rows).as_bytes())?;
    }
    Ok(rows)
}

/// Writes `param,value,status,min_psnr_db,baseline_db,outer_iterations,user_psnr_db,error`;
/// per-user PSNRs are `;`-separated in user order.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "value", "status", "min_psnr_db", "baseline_db", "outer_iterations", "user_psnr_db", "error"])?;
    for r in rows {
        let users: Vec<String> = r.user_psnr_db.iter().map(|v| v.to_string()).collect();
        w.write_record([
            r.param.to_string(),
            r.value.to_string(),
            r.status.to_string(),
            r.min_psnr_db.to_string(),
            r.baseline_db.to_string(),
            r.outer_iterations.to_string(),
            users.join(";"),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_summary(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<6} {:>10} {:>14} {:>12} {:>12} {:>6}", "param", "value", "status", "min_db", "baseline_db", "iters");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<6} {:>10} {:>14} {:>12.4} {:>12.4} {:>6}",
            r.param.to_string(),
            r.value,
            r.status.to_string(),
            r.min_psnr_db,
            r.baseline_db,
            r.outer_iterations
        );
        if let Some(e) = &r.error {
            let _ = writeln!(s, "       error: {e}");
        }
    }
    s
}

/// Serializes the configured scenario (generated users and computed
/// spectrum included) as a scenario file.
pub fn gen_scenario(config: &Config) -> Result<String> {
    config.build_scenario()?.to_toml()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_nested_keys() {
        let env = vec![
            ("UAVCAST_OPTIMIZER__MAX_OUTER".to_string(), "12".to_string()),
            ("UAVCAST_SIMULATION__MODE".to_string(), "montecarlo".to_string()),
            ("UAVCAST_SEED".to_string(), "11".to_string()),
            ("OTHER_SEED".to_string(), "3".to_string()),
        ];
        let c = Config::from_toml_with_env("seed = 2\n[optimizer]\ntolerance = 1e-3\n", "test", env).unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.optimizer.max_outer, 12);
        assert_eq!(c.optimizer.tolerance, 1e-3);
        assert_eq!(c.simulation.mode, PsnrMode::Montecarlo);
    }

    #[test]
    fn unknown_keys_are_reported_with_origin() {
        let err = Config::from_toml_with_env("[optimizer]\ntolerence = 1\n", "cfg.toml", Vec::new()).unwrap_err();
        assert!(err.to_string().contains("cfg.toml"), "{err}");
        let err = Config::from_toml_with_env("seed = \n", "cfg.toml", Vec::new()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn sweep_parameters_parse_and_apply() {
        let base = Config::default();
        assert_eq!("K".parse::<SweepParam>().unwrap(), SweepParam::Slots);
        assert_eq!("E_t".parse::<SweepParam>().unwrap(), SweepParam::Energy);
        assert!("Q".parse::<SweepParam>().is_err());
        let c = SweepParam::Slots.apply(&base, 120.0).unwrap();
        let s = c.build_scenario().unwrap();
        assert_eq!((s.slots, s.spectrum.kept), (120, 120));
        assert!(SweepParam::Users.apply(&base, 2.5).is_err());
    }

    #[test]
    fn default_scenario_uses_table_one_and_seeded_users() {
        let s = Config::default().build_scenario().unwrap();
        assert_eq!(s.users.len(), 4);
        assert_eq!(s.total_blocks(), 192);
        assert_eq!(s.slots, 180);
        assert!(s.users.iter().all(|u| (0.0..1200.0).contains(&u.position.x)));
    }
}
