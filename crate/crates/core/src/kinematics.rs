//! Fixed-wing kinematics, propulsion power and energy accounting.
//!
//! A trajectory stores `K + 1` samples of position, velocity and acceleration.
//! Index 0 holds the boundary conditions; slots `1..=K` are the flight.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Issue, Result};
use crate::scenario::Scenario;
use crate::Vec3;

/// Lower bound on every per-slot power, keeping `1/p` finite.
pub const P_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropulsionParams {
    pub c1: f64,
    pub c2: f64,
    /// Gravitational acceleration, m/s².
    pub g0: f64,
}

impl PropulsionParams {
    pub fn table_one() -> Self {
        Self {
            c1: 9.26e-4,
            c2: 2250.0,
            g0: 9.8,
        }
    }

    pub fn check(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("g0", self.g0)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(Issue::new(format!("propulsion.{name}"), format!("must be positive, got {v}")));
            }
        }
        out
    }

    /// Speed minimizing level-flight propulsion power, `(c2 / 3c1)^¼`.
    pub fn best_speed(&self) -> f64 {
        (self.c2 / (3.0 * self.c1)).powf(0.25)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub q: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub a: Vec<Vec3>,
}

impl Trajectory {
    /// Number of flight slots `K`.
    pub fn slots(&self) -> usize {
        self.q.len().saturating_sub(1)
    }

    fn check_lengths(&self) -> Result<()> {
        if self.q.is_empty() || self.q.len() != self.v.len() || self.q.len() != self.a.len() {
            return Err(Error::Dimension(format!(
                "trajectory sequences have lengths {}, {}, {}",
                self.q.len(),
                self.v.len(),
                self.a.len()
            )));
        }
        Ok(())
    }

    /// Largest and smallest speed over slots `1..=K`.
    pub fn speed_range(&self) -> (f64, f64) {
        self.v[1..]
            .iter()
            .map(|v| v.norm())
            .fold((f64::INFINITY, 0.0), |(lo, hi), s| (lo.min(s), hi.max(s)))
    }

    pub fn max_accel(&self) -> f64 {
        self.a[1..].iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// Average transmit power per slot, watts.
    pub p: Vec<f64>,
}

impl PowerAllocation {
    pub fn uniform(k: usize, p: f64) -> Self {
        Self { p: vec![p; k] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsResidual {
    /// Max position residual, m.
    pub position: f64,
    /// Max velocity residual, m/s.
    pub velocity: f64,
}

impl DynamicsResidual {
    pub fn max(&self) -> f64 {
        self.position.max(self.velocity)
    }
}

/// Residuals of `v[k] = v[k−1] + a[k−1]Δ` and
/// `q[k] = q[k−1] + v[k−1]Δ + ½a[k−1]Δ²`.
pub fn dynamics_residual(traj: &Trajectory, dt: f64) -> Result<DynamicsResidual> {
    traj.check_lengths()?;
    let mut out = DynamicsResidual {
        position: 0.0,
        velocity: 0.0,
    };
    for k in 1..traj.q.len() {
        let rv = traj.v[k] - traj.v[k - 1] - traj.a[k - 1] * dt;
        let rq = traj.q[k] - traj.q[k - 1] - traj.v[k - 1] * dt - traj.a[k - 1] * (0.5 * dt * dt);
        out.velocity = out.velocity.max(rv.norm());
        out.position = out.position.max(rq.norm());
    }
    Ok(out)
}

/// `c1‖v‖³ + (c2/‖v‖)(1 + ‖a‖²/g0²)`.
pub fn propulsion_power(params: &PropulsionParams, v: &Vec3, a: &Vec3) -> Result<f64> {
    let s = v.norm();
    if s <= 0.0 {
        return Err(Error::Invalid(
            "propulsion power is undefined at zero speed".into(),
        ));
    }
    Ok(params.c1 * s * s * s + params.c2 / s * (1.0 + a.norm_squared() / (params.g0 * params.g0)))
}

/// `Δ Σ_{k=1..K} propulsion(v[k], a[k])`.
pub fn flight_energy(params: &PropulsionParams, traj: &Trajectory, dt: f64) -> Result<f64> {
    traj.check_lengths()?;
    let mut e = 0.0;
    for k in 1..traj.q.len() {
        e += propulsion_power(params, &traj.v[k], &traj.a[k])?;
    }
    Ok(dt * e)
}

/// `N_p Δ Σ p_k`.
pub fn comm_energy(coeffs_per_block: usize, dt: f64, power: &PowerAllocation) -> f64 {
    coeffs_per_block as f64 * dt * power.p.iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_c: f64,
    pub e_f: f64,
    pub e_max: f64,
    /// `E_t − E_c − E_f`.
    pub slack: f64,
    pub feasible: bool,
}

pub fn energy_feasible(
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerAllocation,
) -> Result<EnergyReport> {
    let e_c = comm_energy(scenario.coeffs_per_block, scenario.slot_len, power);
    let e_f = flight_energy(&scenario.propulsion, traj, scenario.slot_len)?;
    let e_max = scenario.max_comm_energy();
    let slack = scenario.total_energy - e_c - e_f;
    Ok(EnergyReport {
        e_c,
        e_f,
        e_max,
        slack,
        feasible: slack >= 0.0 && (0.0..=e_max).contains(&e_c),
    })
}

/// Writes `k,x,y,z,vx,vy,vz,ax,ay,az,p_w`; `p_w` is empty at `k = 0`.
pub fn write_trajectory_csv<W: Write>(
    traj: &Trajectory,
    power: Option<&PowerAllocation>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "p_w"])?;
    for k in 0..traj.q.len() {
        let (q, v, a) = (traj.q[k], traj.v[k], traj.a[k]);
        let p = match (k, power) {
            (0, _) | (_, None) => String::new(),
            (k, Some(p)) => p.p[k - 1].to_string(),
        };
        let mut rec: Vec<String> = vec![k.to_string()];
        rec.extend([q, v, a].iter().flat_map(|u| u.iter().map(|c| c.to_string())));
        rec.push(p);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_trajectory_csv`].
pub fn read_trajectory_csv<R: std::io::Read>(input: R) -> Result<(Trajectory, Option<PowerAllocation>)> {
    let mut r = csv::Reader::from_reader(input);
    let (mut q, mut v, mut a, mut p) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e| Error::Invalid(format!("trajectory CSV column {i}: {e}")))
        };
        q.push(Vec3::new(num(1)?, num(2)?, num(3)?));
        v.push(Vec3::new(num(4)?, num(5)?, num(6)?));
        a.push(Vec3::new(num(7)?, num(8)?, num(9)?));
        if let Some(s) = rec.get(10).filter(|s| !s.is_empty()) {
            p.push(
                s.parse()
                    .map_err(|e| Error::Invalid(format!("trajectory CSV p_w: {e}")))?,
            );
        }
    }
    let traj = Trajectory { q, v, a };
    let power = (!p.is_empty()).then_some(PowerAllocation { p });
    Ok((traj, power))
}
