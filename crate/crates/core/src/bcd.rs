//! Alternating (block coordinate) optimization of powers and trajectory.
//!
//! Each outer iteration solves the power subproblem for the current path and
//! then the trajectory subproblem for the new powers. A step is kept only if
//! it does not lower the true worst-user PSNR, so the trace is monotone by
//! construction; the subproblem solvers already guarantee this up to their
//! tolerances.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{comm_energy, dynamics_residual, energy_feasible, flight_energy, PowerAllocation, Trajectory, P_FLOOR};
use crate::power::{solve_power, PowerSettings};
use crate::quality::min_psnr;
use crate::scenario::Scenario;
use crate::trajectory::{max_step, slack_tightness, solve_trajectory, SlackSpeeds, TrajectorySettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvergenceScale {
    /// Relative change of `τ = 10^(μ/10)`.
    Linear,
    /// Relative change of `μ` in dB.
    Db,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Relative-improvement threshold `ς`.
    pub tolerance: f64,
    pub max_outer: usize,
    pub scale: ConvergenceScale,
    /// The trust region is dropped once an outer step moves every waypoint by
    /// less than this fraction of its radius.
    pub trust_release: f64,
    pub power: PowerSettings,
    pub trajectory: TrajectorySettings,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_outer: 100,
            scale: ConvergenceScale::Linear,
            trust_release: 0.1,
            power: PowerSettings::default(),
            trajectory: TrajectorySettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeStatus {
    Converged,
    /// `max_outer` reached before the improvement fell below the threshold.
    MaxOuter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Worst-user PSNR after the iteration, dB.
    pub mu_db: f64,
    /// Worst-user PSNR after the power step, dB.
    pub mu_power_db: f64,
    pub e_c_j: f64,
    pub e_f_j: f64,
    /// Largest Lemma-2 gap of the trajectory step's slack speeds.
    pub slack_gap: f64,
}

#[derive(Debug, Clone)]
pub struct Optimization {
    pub power: PowerAllocation,
    pub traj: Trajectory,
    pub slack: Option<SlackSpeeds>,
    /// Entry 0 is the starting point.
    pub trace: Vec<IterationRecord>,
    pub status: OptimizeStatus,
}

impl Optimization {
    pub fn mu_db(&self) -> f64 {
        self.trace.last().map_or(f64::NEG_INFINITY, |r| r.mu_db)
    }

    pub fn outer_iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

/// True when the relative improvement `(τ_next − τ_prev)/τ_prev` is at most
/// `tol`. A decrease also ends the iteration and is logged.
pub fn convergence_check(tau_prev: f64, tau_next: f64, tol: f64) -> bool {
    if tau_next < tau_prev {
        warn!("objective decreased from {tau_prev} to {tau_next}");
        return true;
    }
    (tau_next - tau_prev) / tau_prev <= tol
}

fn converged(settings: &OptimizerSettings, mu_prev: f64, mu_next: f64) -> bool {
    match settings.scale {
        ConvergenceScale::Linear => convergence_check(10f64.powf(mu_prev / 10.0), 10f64.powf(mu_next / 10.0), settings.tolerance),
        ConvergenceScale::Db => convergence_check(mu_prev, mu_next, settings.tolerance),
    }
}

/// Straight flight with powers scaled down until the energy budget holds.
pub fn feasible_start(scenario: &Scenario) -> Result<(Trajectory, PowerAllocation)> {
    let (traj, mut power) = scenario.initial_solution();
    let e_f = flight_energy(&scenario.propulsion, &traj, scenario.slot_len)?;
    let e_c = comm_energy(scenario.coeffs_per_block, scenario.slot_len, &power);
    let avail = scenario.total_energy - e_f;
    if e_c > avail {
        let s = avail / e_c;
        if s * scenario.max_avg_power <= P_FLOOR {
            return Err(Error::Infeasible(format!(
                "straight flight needs {e_f:.3} J of the {} J budget",
                scenario.total_energy
            )));
        }
        warn!("scaling the initial powers by {s:.6} to meet the energy budget");
        power.p.iter_mut().for_each(|p| *p *= s * (1.0 - 1e-9));
    }
    Ok((traj, power))
}

fn record(scenario: &Scenario, iter: usize, traj: &Trajectory, power: &PowerAllocation, mu_power: f64, gap: f64) -> Result<IterationRecord> {
    Ok(IterationRecord {
        iter,
        mu_db: min_psnr(scenario, traj, power)?.0,
        mu_power_db: mu_power,
        e_c_j: comm_energy(scenario.coeffs_per_block, scenario.slot_len, power),
        e_f_j: flight_energy(&scenario.propulsion, traj, scenario.slot_len)?,
        slack_gap: gap,
    })
}

pub fn optimize(scenario: &Scenario, settings: &OptimizerSettings) -> Result<Optimization> {
    scenario.validate()?;
    let (mut traj, mut power) = feasible_start(scenario)?;
    let mut mu = min_psnr(scenario, &traj, &power)?.0;
    let mut trace = vec![record(scenario, 0, &traj, &power, mu, 0.0)?];
    let mut slack = None;
    let mut traj_settings = settings.trajectory;
    info!("start: min PSNR {mu:.6} dB");

    for iter in 1..=settings.max_outer {
        let mu_prev = mu;
        let ps = solve_power(scenario, &traj, &power, &settings.power)?;
        if ps.mu_db >= mu {
            power = ps.power;
            mu = ps.mu_db;
        }
        let mu_power = mu;

        let mut gap = f64::NAN;
        match solve_trajectory(scenario, &power, &traj, &traj_settings) {
            Ok(ts) if ts.mu_db >= mu => {
                let step = max_step(&ts.traj, &traj);
                if let Some(rho) = traj_settings.trust_region {
                    if step < settings.trust_release * rho {
                        traj_settings.trust_region = None;
                    }
                }
                gap = slack_tightness(&ts.traj, &ts.slack);
                traj = ts.traj;
                mu = ts.mu_db;
                slack = Some(ts.slack);
            }
            Ok(ts) => warn!("iteration {iter}: trajectory step lowered min PSNR to {:.9} dB, kept previous path", ts.mu_db),
            Err(Error::Infeasible(m)) => warn!("iteration {iter}: trajectory step infeasible ({m}), kept previous path"),
            Err(e) => return Err(e),
        }
        trace.push(record(scenario, iter, &traj, &power, mu_power, gap)?);
        info!("iteration {iter}: min PSNR {mu:.6} dB (power step {mu_power:.6})");
        if converged(settings, mu_prev, mu) {
            return Ok(Optimization {
                power,
                traj,
                slack,
                trace,
                status: OptimizeStatus::Converged,
            });
        }
    }
    Ok(Optimization {
        power,
        traj,
        slack,
        trace,
        status: OptimizeStatus::MaxOuter,
    })
}

/// Writes `iter,mu_db,e_c_j,e_f_j`.
pub fn write_iterations_csv<W: std::io::Write>(trace: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "mu_db", "e_c_j", "e_f_j"])?;
    for r in trace {
        w.write_record([r.iter.to_string(), r.mu_db.to_string(), r.e_c_j.to_string(), r.e_f_j.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Independent re-evaluation of every flight and energy constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub energy_slack_j: f64,
    pub comm_energy_j: f64,
    pub max_comm_energy_j: f64,
    pub dynamics_residual: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    pub start_error_m: f64,
    pub end_error_m: f64,
    pub min_power_w: f64,
    pub violations: Vec<String>,
}

impl Certificate {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a solution against the original constraints with tolerance `tol`
/// (joules, metres, m/s as applicable).
pub fn certify(scenario: &Scenario, traj: &Trajectory, power: &PowerAllocation, tol: f64) -> Result<Certificate> {
    let energy = energy_feasible(scenario, traj, power)?;
    let dyn_res = dynamics_residual(traj, scenario.slot_len)?.max();
    let (lo, hi) = traj.speed_range();
    let l = &scenario.limits;
    let mut c = Certificate {
        energy_slack_j: energy.slack,
        comm_energy_j: energy.e_c,
        max_comm_energy_j: energy.e_max,
        dynamics_residual: dyn_res,
        min_speed: lo,
        max_speed: hi,
        max_accel: traj.max_accel(),
        start_error_m: (traj.q[0] - scenario.start).norm(),
        end_error_m: (traj.q[scenario.slots] - scenario.end).norm(),
        min_power_w: power.p.iter().cloned().fold(f64::INFINITY, f64::min),
        violations: Vec::new(),
    };
    let mut bad = |cond: bool, msg: String| {
        if cond {
            c.violations.push(msg)
        }
    };
    bad(energy.slack < -tol, format!("energy budget exceeded by {:.3e} J", -energy.slack));
    bad(energy.e_c > energy.e_max + tol, format!("communication energy {:.6} J above {:.6} J", energy.e_c, energy.e_max));
    bad(dyn_res > tol, format!("dynamics residual {dyn_res:.3e}"));
    bad(lo < l.v_min - tol, format!("speed {lo:.9} below {}", l.v_min));
    bad(hi > l.v_max + tol, format!("speed {hi:.9} above {}", l.v_max));
    bad(traj.max_accel() > l.a_max + tol, format!("acceleration {:.9} above {}", traj.max_accel(), l.a_max));
    bad(c.start_error_m > tol, format!("start point off by {:.3e} m", c.start_error_m));
    bad(c.end_error_m > tol, format!("end point off by {:.3e} m", c.end_error_m));
    bad(c.min_power_w < 0.0, format!("negative power {:.3e} W", c.min_power_w));
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_check_examples() {
        assert!(convergence_check(100.0, 100.005, 1e-4));
        assert!(!convergence_check(100.0, 100.02, 1e-4));
        assert!(convergence_check(100.0, 99.0, 1e-4));
        assert!(convergence_check(100.0, 100.0, 0.0));
        assert!(!convergence_check(100.0, 100.0 + 1e-9, 0.0));
    }
}
