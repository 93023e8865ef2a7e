//! Power subproblem: maximize the worst user's PSNR over the per-slot powers
//! with the trajectory held fixed.
//!
//! In linear scale the PSNR of user `n` is
//!
//! ```text
//! φ_n(p) = γ₀ / (Σ_k ω_k / p_k + γ₁),   γ₀ = Mη²,  γ₁ = Σ_{m>K} λ_m,
//! ω_k = σ₀² λ_k d_k^α / β₀,
//! ```
//!
//! which is concave in `p`. The program maximizes `τ` subject to `τ ≤ φ_n(p)`
//! for every user, the communication-energy budget and the power bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{flight_energy, PowerAllocation, Trajectory, P_FLOOR};
use crate::scenario::Scenario;
use crate::solver::{self, ConvexProgram, EqualityRow, FnEval, Need, SolveReport, SolverSettings, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSettings {
    /// Enforce `p_k ≤ P̄_max` in every slot in addition to the total budget.
    pub per_slot_cap: bool,
    pub solver: SolverSettings,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self {
            per_slot_cap: true,
            solver: SolverSettings::default(),
        }
    }
}

/// Linear-scale PSNR `φ_n` of one user as a function of the powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PsnrModel {
    pub omega: Vec<f64>,
    pub gamma0: f64,
    pub gamma1: f64,
}

impl PsnrModel {
    pub fn new(scenario: &Scenario, traj: &Trajectory, user: usize) -> Result<Self> {
        let ch = &scenario.channel;
        let w = &scenario.users[user].position;
        let lambda = scenario.spectrum.kept_variances();
        if traj.slots() != lambda.len() {
            return Err(Error::Dimension(format!(
                "{} trajectory slots for {} transmitted blocks",
                traj.slots(),
                lambda.len()
            )));
        }
        let omega = lambda
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                let g = crate::channel::avg_gain(ch, &traj.q[k + 1], w)?;
                Ok(ch.noise_power * l / g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            omega,
            gamma0: scenario.total_blocks() as f64 * scenario.pixel_peak * scenario.pixel_peak,
            gamma1: scenario.spectrum.truncation(),
        })
    }

    fn denom(&self, p: &[f64]) -> f64 {
        self.omega.iter().zip(p).map(|(w, p)| w / p).sum::<f64>() + self.gamma1
    }

    pub fn phi(&self, p: &[f64]) -> f64 {
        self.gamma0 / self.denom(p)
    }

    pub fn psnr_db(&self, p: &[f64]) -> f64 {
        10.0 * self.phi(p).log10()
    }

    /// `∂φ/∂p_k = γ₀ ω_k / (p_k² D²)`.
    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let d = self.denom(p);
        self.omega
            .iter()
            .zip(p)
            .map(|(w, p)| self.gamma0 * w / (p * p * d * d))
            .collect()
    }

    /// Full Hessian, row-major `K × K`:
    /// `γ₀ [2 D⁻³ a_j a_k − 2 D⁻² ω_k / p_k³ δ_jk]` with `a_k = ω_k / p_k²`.
    pub fn hessian(&self, p: &[f64]) -> Vec<f64> {
        let k = p.len();
        let d = self.denom(p);
        let a: Vec<f64> = self.omega.iter().zip(p).map(|(w, p)| w / (p * p)).collect();
        let mut h = vec![0.0; k * k];
        let c3 = 2.0 * self.gamma0 / (d * d * d);
        for i in 0..k {
            for j in 0..k {
                h[i * k + j] = c3 * a[i] * a[j];
            }
            h[i * k + i] -= 2.0 * self.gamma0 / (d * d) * self.omega[i] / p[i].powi(3);
        }
        h
    }

    /// Value, gradient and Hessian of `τ − φ(p)` over the stacked `(p, τ)`.
    pub fn constraint(&self, p: &[f64], tau: f64, need: Need) -> FnEval {
        let k = p.len();
        let mut e = FnEval::value(tau - self.phi(p));
        if need >= Need::Gradient {
            e.grad = self.gradient(p).into_iter().enumerate().map(|(i, g)| (i, -g)).collect();
            e.grad.push((k, 1.0));
        }
        if need >= Need::Hessian {
            let h = self.hessian(p);
            for i in 0..k {
                for j in 0..=i {
                    e.hess.push((i, j, -h[i * k + j]));
                }
            }
        }
        e
    }
}

/// Program over `x = p / P̄_max` and `u = τ / τ_ref`.
struct PowerProgram {
    structure: Structure,
    models: Vec<PsnrModel>,
    p_max: f64,
    tau_ref: f64,
    /// Communication-energy budget.
    budget: f64,
    /// Energy per unit of `x` in one slot, `N_p Δ P̄_max`.
    unit_energy: f64,
    cap: bool,
    k: usize,
    rows: Vec<EqualityRow>,
}

impl PowerProgram {
    fn powers(&self, x: &[f64]) -> Vec<f64> {
        x[..self.k].iter().map(|v| v * self.p_max).collect()
    }
}

impl ConvexProgram for PowerProgram {
    fn structure(&self) -> &Structure {
        &self.structure
    }

    fn objective(&self, x: &[f64], need: Need) -> FnEval {
        FnEval::affine(x, 0.0, &[(self.k, -1.0)], need)
    }

    fn num_inequalities(&self) -> usize {
        self.models.len() + self.k * (1 + self.cap as usize) + 1
    }

    fn inequality(&self, i: usize, x: &[f64], need: Need) -> FnEval {
        let k = self.k;
        let n = self.models.len();
        if i < n {
            // (τ_ref u − φ(P̄ x)) / τ_ref, expressed in x
            let p = self.powers(x);
            let mut e = self.models[i].constraint(&p, self.tau_ref * x[k], need);
            e.value /= self.tau_ref;
            for g in e.grad.iter_mut() {
                g.1 *= if g.0 == k { 1.0 } else { self.p_max / self.tau_ref };
            }
            let s = self.p_max * self.p_max / self.tau_ref;
            for h in e.hess.iter_mut() {
                h.2 *= s;
            }
            return e;
        }
        let i = i - n;
        if i < k {
            return FnEval::affine(x, P_FLOOR / self.p_max, &[(i, -1.0)], need);
        }
        let i = i - k;
        if self.cap && i < k {
            return FnEval::affine(x, -1.0, &[(i, 1.0)], need);
        }
        let c = self.unit_energy / self.budget;
        let coeffs: Vec<(usize, f64)> = (0..k).map(|j| (j, c)).collect();
        FnEval::affine(x, -1.0, &coeffs, need)
    }

    fn equalities(&self) -> &[EqualityRow] {
        &self.rows
    }
}

#[derive(Debug, Clone)]
pub struct PowerSolution {
    pub power: PowerAllocation,
    /// Worst-user PSNR at the returned powers, dB.
    pub mu_db: f64,
    pub report: SolveReport,
}

/// Worst-user PSNR in dB from per-user models.
pub fn min_psnr_db(models: &[PsnrModel], p: &[f64]) -> f64 {
    models
        .iter()
        .map(|m| m.psnr_db(p))
        .fold(f64::INFINITY, f64::min)
}

/// Energy available for communication given the flight energy of `traj`.
pub fn comm_budget(scenario: &Scenario, traj: &Trajectory) -> Result<f64> {
    let e_f = flight_energy(&scenario.propulsion, traj, scenario.slot_len)?;
    let avail = scenario.total_energy - e_f;
    let floor_energy = scenario.coeffs_per_block as f64 * scenario.slot_len * scenario.slots as f64 * P_FLOOR;
    if avail <= floor_energy {
        return Err(Error::Infeasible(format!(
            "flight energy {e_f:.3} J leaves {avail:.3e} J of the {} J budget for communication",
            scenario.total_energy
        )));
    }
    let e_max = scenario.max_comm_energy();
    Ok(avail.min(e_max))
}

/// Solves the power subproblem for a fixed trajectory, starting from `start`.
pub fn solve_power(
    scenario: &Scenario,
    traj: &Trajectory,
    start: &PowerAllocation,
    settings: &PowerSettings,
) -> Result<PowerSolution> {
    let k = scenario.slots;
    if start.p.len() != k {
        return Err(Error::Dimension(format!("{} start powers for {k} slots", start.p.len())));
    }
    let models = (0..scenario.users.len())
        .map(|n| PsnrModel::new(scenario, traj, n))
        .collect::<Result<Vec<_>>>()?;
    let budget = comm_budget(scenario, traj)?;
    let p_max = scenario.max_avg_power;
    let unit_energy = scenario.coeffs_per_block as f64 * scenario.slot_len * p_max;

    // strictly interior start: clamp into the box, then shrink into the budget
    let lo = P_FLOOR / p_max;
    let mut x: Vec<f64> = start.p.iter().map(|p| (p / p_max).max(lo * 2.0)).collect();
    if settings.per_slot_cap {
        x.iter_mut().for_each(|v| *v = v.min(1.0 - 1e-6));
    }
    let used = unit_energy * x.iter().sum::<f64>();
    if used >= budget * (1.0 - 1e-6) {
        let s = budget * (1.0 - 1e-6) / used;
        x.iter_mut().for_each(|v| *v = (*v * s).max(lo * (1.0 + 1e-3)));
    }
    let p0: Vec<f64> = x.iter().map(|v| v * p_max).collect();
    let tau_ref = models
        .iter()
        .map(|m| m.phi(&p0))
        .fold(f64::INFINITY, f64::min);
    x.push(1.0 - 1e-3);

    let program = PowerProgram {
        structure: Structure::dense(k + 1),
        models,
        p_max,
        tau_ref,
        budget,
        unit_energy,
        cap: settings.per_slot_cap,
        k,
        rows: Vec::new(),
    };
    let report = solver::solve(&program, &x, &settings.solver)?;
    if report.status == solver::SolveStatus::Infeasible {
        return Err(Error::Infeasible("power subproblem has no strictly feasible point".into()));
    }

    let mut p = program.powers(&report.x);
    p.iter_mut().for_each(|v| *v = v.max(P_FLOOR));
    // The barrier iterate is interior; scaling all powers up until a bound
    // is reached can only raise every user's PSNR.
    let mut s = budget * (1.0 - 1e-10) / (p.iter().sum::<f64>() * p_max.recip() * unit_energy);
    if settings.per_slot_cap {
        let peak = p.iter().fold(0.0f64, |m, v| m.max(*v));
        s = s.min(p_max / peak);
    }
    if s > 1.0 {
        p.iter_mut().for_each(|v| *v *= s);
    }
    let mut mu_db = min_psnr_db(&program.models, &p);

    // never return something worse than a feasible start
    let start_ok = start.p.iter().all(|&v| v >= P_FLOOR && (!settings.per_slot_cap || v <= p_max))
        && unit_energy / p_max * start.p.iter().sum::<f64>() <= budget;
    let start_mu = min_psnr_db(&program.models, &start.p);
    if start_ok && start_mu > mu_db {
        p = start.p.clone();
        mu_db = start_mu;
    }
    Ok(PowerSolution {
        power: PowerAllocation { p },
        mu_db,
        report,
    })
}

/// Writes `slot,lambda,p_w` with 1-based slots.
pub fn write_power_csv<W: std::io::Write>(lambda: &[f64], power: &PowerAllocation, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "lambda", "p_w"])?;
    for (k, (l, p)) in lambda.iter().zip(&power.p).enumerate() {
        w.write_record([(k + 1).to_string(), l.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
