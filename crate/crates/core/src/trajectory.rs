//! Trajectory subproblem: successive convex approximation of the worst-user
//! PSNR over the flight path with the powers held fixed.
//!
//! Around an expansion path `Q_r`, every user's PSNR is bounded below by
//!
//! ```text
//! PSNR_n(Q) ≥ I_n − Σ_k J_n[k] (‖q[k] − w_n‖² − ‖q_r[k] − w_n‖²),
//! ```
//!
//! which is concave in `Q` and exact at `Q_r`. The non-convex speed terms are
//! handled with a slack speed `o[k] ≤ ‖v[k]‖` and the linear under-estimator
//! `‖v‖² ≥ ‖v_r‖² + 2 v_rᵀ(v − v_r)`.
//!
//! Variables are laid out slot by slot so the KKT system is banded: slot `k`
//! holds `(q, v, a)` (horizontal parts), `o`, the propulsion-energy epigraph
//! `f` and one PSNR epigraph `e_n` per user. The objective `μ` (dB), the PSNR
//! slacks `σ_n` and the energy slack `σ_E` are global; the coupling sums
//! `Σ_k e_{n,k} + μ + σ_n = c_n` and `Σ_k f_k + σ_E = E_t − E_c` are
//! equality rows.

use std::f64::consts::LN_10;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{comm_energy, flight_energy, PowerAllocation, PropulsionParams, Trajectory, P_FLOOR};
use crate::scenario::Scenario;
use crate::solver::{self, ConvexProgram, EqualityRow, FnEval, Need, SolveReport, SolveStatus, SolverSettings, Structure};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySettings {
    /// Per-slot step cap `‖q[k] − q_r[k]‖ ≤ ρ` in metres; `None` disables it.
    pub trust_region: Option<f64>,
    /// Most linearizations per call. Passes repeat until the slack speeds are
    /// within `sca_gap_tol` of the speeds; each pass is kept only if it does
    /// not lower the true worst-user PSNR.
    pub inner_sca_iters: usize,
    pub sca_gap_tol: f64,
    pub solver: SolverSettings,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self {
            trust_region: Some(50.0),
            inner_sca_iters: 30,
            sca_gap_tol: 1e-5,
            solver: SolverSettings::default(),
        }
    }
}

/// First-order PSNR lower bound around an expansion path.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateCoefficients {
    /// PSNR of each user at the expansion path, dB.
    pub i_db: Vec<f64>,
    /// `J_n[k]` in dB per m², indexed `[user][slot]` with slot 0 for `q[1]`.
    pub j: Vec<Vec<f64>>,
    pub expansion: Trajectory,
    /// User positions the coefficients were built for.
    pub users: Vec<Vec3>,
}

impl SurrogateCoefficients {
    /// Surrogate PSNR of `user` along `traj`.
    pub fn psnr(&self, user: usize, traj: &Trajectory) -> f64 {
        let w = &self.users[user];
        let drop: f64 = self.j[user]
            .iter()
            .enumerate()
            .map(|(k, j)| j * ((traj.q[k + 1] - w).norm_squared() - (self.expansion.q[k + 1] - w).norm_squared()))
            .sum();
        self.i_db[user] - drop
    }

    pub fn min_psnr(&self, traj: &Trajectory) -> f64 {
        (0..self.users.len()).map(|n| self.psnr(n, traj)).fold(f64::INFINITY, f64::min)
    }
}

/// Per-slot noise weight `σ₀²λ_k / (β₀ p_k)` so the noise term is weight·d².
fn slot_weights(scenario: &Scenario, power: &PowerAllocation) -> Vec<f64> {
    let ch = &scenario.channel;
    scenario
        .spectrum
        .kept_variances()
        .iter()
        .zip(&power.p)
        .map(|(l, p)| ch.noise_power * l / (ch.beta0 * p.max(P_FLOOR)))
        .collect()
}

fn check_square_law(scenario: &Scenario) -> Result<()> {
    if scenario.channel.alpha != 2.0 {
        return Err(Error::Invalid(format!(
            "trajectory optimization needs path-loss exponent 2, got {}",
            scenario.channel.alpha
        )));
    }
    Ok(())
}

pub fn build_surrogate(scenario: &Scenario, power: &PowerAllocation, expansion: &Trajectory) -> Result<SurrogateCoefficients> {
    check_square_law(scenario)?;
    let k = scenario.slots;
    if expansion.slots() != k || power.p.len() != k {
        return Err(Error::Dimension(format!(
            "{} trajectory slots and {} powers for {k} slots",
            expansion.slots(),
            power.p.len()
        )));
    }
    let c = slot_weights(scenario, power);
    let gamma0 = scenario.total_blocks() as f64 * scenario.pixel_peak * scenario.pixel_peak;
    let gamma1 = scenario.spectrum.truncation();
    let users: Vec<Vec3> = scenario.users.iter().map(|u| u.position).collect();
    let mut i_db = Vec::with_capacity(users.len());
    let mut j = Vec::with_capacity(users.len());
    for w in &users {
        let s: f64 = c
            .iter()
            .enumerate()
            .map(|(k, c)| c * (expansion.q[k + 1] - w).norm_squared())
            .sum::<f64>()
            + gamma1;
        i_db.push(10.0 * (gamma0 / s).log10());
        j.push(c.iter().map(|c| 10.0 * c / (LN_10 * s)).collect());
    }
    Ok(SurrogateCoefficients {
        i_db,
        j,
        expansion: expansion.clone(),
        users,
    })
}

/// `‖v_r‖² + 2 v_rᵀ(v − v_r)`, a global under-estimator of `‖v‖²`.
pub fn velocity_lower_bound(v_r: &Vec3, v: &Vec3) -> f64 {
    v_r.norm_squared() + 2.0 * v_r.dot(&(v - v_r))
}

/// Slack speeds `o[k]` for slots `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackSpeeds {
    pub o: Vec<f64>,
}

/// `max_k |‖v[k]‖ − o[k]| / ‖v[k]‖` over slots `1..=K`.
pub fn slack_tightness(traj: &Trajectory, slack: &SlackSpeeds) -> f64 {
    slack
        .o
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let s = traj.v[k + 1].norm();
            (s - o).abs() / s
        })
        .fold(0.0, f64::max)
}

/// `Δ (c1‖v‖³ + c2/o (1 + ‖a‖²/g0²))`, convex in `(v, a, o)` for `o > 0`.
pub fn slot_energy_bound(params: &PropulsionParams, dt: f64, v: &Vec3, a: &Vec3, o: f64) -> f64 {
    dt * (params.c1 * v.norm().powi(3) + params.c2 / o * (1.0 + a.norm_squared() / (params.g0 * params.g0)))
}

// slot-local variable offsets
const QX: usize = 0;
const VX: usize = 2;
const AX: usize = 4;
const O: usize = 6;
const F: usize = 7;
const E: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Local {
    SpeedMax,
    SpeedMin,
    Slack,
    SlackSign,
    Accel,
    Energy,
    Trust,
    Psnr(usize),
}

struct TrajectoryProgram<'a> {
    scenario: &'a Scenario,
    sur: &'a SurrogateCoefficients,
    structure: Structure,
    rows: Vec<EqualityRow>,
    locals: Vec<Local>,
    n: usize,
    k: usize,
    trust: Option<f64>,
    /// Scale of a slot's propulsion energy, J.
    energy_scale: f64,
}

impl<'a> TrajectoryProgram<'a> {
    fn width(&self) -> usize {
        E + self.n
    }

    fn var(&self, slot: usize, local: usize) -> usize {
        (slot - 1) * self.width() + local
    }

    fn mu(&self) -> usize {
        self.k * self.width()
    }

    fn sigma(&self, user: usize) -> usize {
        self.mu() + 1 + user
    }

    fn sigma_e(&self) -> usize {
        self.mu() + 1 + self.n
    }

    fn vec2(&self, x: &[f64], slot: usize, local: usize) -> Vec3 {
        let i = self.var(slot, local);
        Vec3::new(x[i], x[i + 1], 0.0)
    }

    fn v_r(&self, slot: usize) -> Vec3 {
        let v = self.sur.expansion.v[slot];
        Vec3::new(v.x, v.y, 0.0)
    }

    fn build(scenario: &'a Scenario, sur: &'a SurrogateCoefficients, e_comm: f64, trust: Option<f64>) -> TrajectoryProgram<'a> {
        let n = scenario.users.len();
        let k = scenario.slots;
        let width = E + n;
        let mut block_of = Vec::with_capacity(k * width + n + 2);
        for s in 0..k {
            block_of.extend(std::iter::repeat_n(s, width));
        }
        block_of.extend(std::iter::repeat_n(k, n + 2));
        let mut stage: Vec<Option<usize>> = (0..k).map(Some).collect();
        stage.push(None);

        let mut locals = vec![Local::SpeedMax, Local::SpeedMin, Local::Slack, Local::SlackSign, Local::Accel, Local::Energy];
        if trust.is_some() {
            locals.push(Local::Trust);
        }
        locals.extend((0..n).map(Local::Psnr));

        let mut p = TrajectoryProgram {
            scenario,
            sur,
            structure: Structure::new(block_of, stage),
            rows: Vec::new(),
            locals,
            n,
            k,
            trust,
            energy_scale: scenario.slot_len * 100.0,
        };
        p.rows = p.equality_rows(e_comm);
        p
    }

    fn equality_rows(&self, e_comm: f64) -> Vec<EqualityRow> {
        let s = self.scenario;
        let dt = s.slot_len;
        let mut rows = Vec::new();
        for d in 0..2 {
            // slot 1 follows from the fixed boundary state
            rows.push(EqualityRow::new(vec![self.var(1, VX + d)], vec![1.0]).with_rhs(s.v0[d] + s.a0[d] * dt));
            rows.push(
                EqualityRow::new(vec![self.var(1, QX + d)], vec![1.0])
                    .with_rhs(s.start[d] + s.v0[d] * dt + 0.5 * s.a0[d] * dt * dt),
            );
        }
        for slot in 2..=self.k {
            for d in 0..2 {
                rows.push(EqualityRow::new(
                    vec![self.var(slot, VX + d), self.var(slot - 1, VX + d), self.var(slot - 1, AX + d)],
                    vec![1.0, -1.0, -dt],
                ));
                rows.push(EqualityRow::new(
                    vec![
                        self.var(slot, QX + d),
                        self.var(slot - 1, QX + d),
                        self.var(slot - 1, VX + d),
                        self.var(slot - 1, AX + d),
                    ],
                    vec![1.0, -1.0, -dt, -0.5 * dt * dt],
                ));
            }
        }
        for d in 0..2 {
            rows.push(EqualityRow::new(vec![self.var(self.k, QX + d)], vec![1.0]).with_rhs(s.end[d]));
        }
        for user in 0..self.n {
            let w = &self.sur.users[user];
            let c = self.sur.i_db[user]
                + self.sur.j[user]
                    .iter()
                    .enumerate()
                    .map(|(k, j)| j * (self.sur.expansion.q[k + 1] - w).norm_squared())
                    .sum::<f64>();
            let mut idx: Vec<usize> = (1..=self.k).map(|slot| self.var(slot, E + user)).collect();
            idx.push(self.mu());
            idx.push(self.sigma(user));
            let val = vec![1.0; idx.len()];
            rows.push(EqualityRow::new(idx, val).with_rhs(c));
        }
        let mut idx: Vec<usize> = (1..=self.k).map(|slot| self.var(slot, F)).collect();
        idx.push(self.sigma_e());
        let val = vec![1.0; idx.len()];
        rows.push(EqualityRow::new(idx, val).with_rhs(s.total_energy - e_comm));
        rows
    }

    fn local(&self, slot: usize, kind: Local, x: &[f64], need: Need) -> FnEval {
        let s = self.scenario;
        let lim = &s.limits;
        let grad = need >= Need::Gradient;
        let hess = need >= Need::Hessian;
        let iv = self.var(slot, VX);
        let ia = self.var(slot, AX);
        let io = self.var(slot, O);
        let v = self.vec2(x, slot, VX);
        let mut e = FnEval::default();
        match kind {
            Local::SpeedMax => {
                let c = 1.0 / (lim.v_max * lim.v_max);
                e.value = c * (v.norm_squared() - lim.v_max * lim.v_max);
                if grad {
                    e.grad = vec![(iv, 2.0 * c * v.x), (iv + 1, 2.0 * c * v.y)];
                }
                if hess {
                    e.hess = vec![(iv, iv, 2.0 * c), (iv + 1, iv + 1, 2.0 * c)];
                }
            }
            Local::SpeedMin => {
                let vr = self.v_r(slot);
                let c = 1.0 / (lim.v_min * lim.v_min);
                e.value = c * (lim.v_min * lim.v_min - velocity_lower_bound(&vr, &v));
                if grad {
                    e.grad = vec![(iv, -2.0 * c * vr.x), (iv + 1, -2.0 * c * vr.y)];
                }
            }
            Local::Slack => {
                let vr = self.v_r(slot);
                let c = 1.0 / vr.norm_squared();
                let o = x[io];
                e.value = c * (o * o - velocity_lower_bound(&vr, &v));
                if grad {
                    e.grad = vec![(iv, -2.0 * c * vr.x), (iv + 1, -2.0 * c * vr.y), (io, 2.0 * c * o)];
                }
                if hess {
                    e.hess = vec![(io, io, 2.0 * c)];
                }
            }
            Local::SlackSign => {
                e.value = -x[io] / lim.v_min;
                if grad {
                    e.grad = vec![(io, -1.0 / lim.v_min)];
                }
            }
            Local::Accel => {
                let a = self.vec2(x, slot, AX);
                let c = 1.0 / (lim.a_max * lim.a_max);
                e.value = c * (a.norm_squared() - lim.a_max * lim.a_max);
                if grad {
                    e.grad = vec![(ia, 2.0 * c * a.x), (ia + 1, 2.0 * c * a.y)];
                }
                if hess {
                    e.hess = vec![(ia, ia, 2.0 * c), (ia + 1, ia + 1, 2.0 * c)];
                }
            }
            Local::Energy => {
                let pr = &s.propulsion;
                let dt = s.slot_len;
                let a = self.vec2(x, slot, AX);
                let o = x[io];
                let iff = self.var(slot, F);
                let c = 1.0 / self.energy_scale;
                let g2 = pr.g0 * pr.g0;
                let lift = 1.0 + a.norm_squared() / g2;
                e.value = c * (slot_energy_bound(pr, dt, &v, &a, o) - x[iff]);
                let sp = v.norm();
                let k = c * dt;
                if grad {
                    e.grad = vec![
                        (iv, k * 3.0 * pr.c1 * sp * v.x),
                        (iv + 1, k * 3.0 * pr.c1 * sp * v.y),
                        (ia, k * 2.0 * pr.c2 * a.x / (g2 * o)),
                        (ia + 1, k * 2.0 * pr.c2 * a.y / (g2 * o)),
                        (io, -k * pr.c2 * lift / (o * o)),
                        (iff, -c),
                    ];
                }
                if hess {
                    // ∇²‖v‖³ = 3(‖v‖ I + v vᵀ/‖v‖)
                    let h = k * 3.0 * pr.c1;
                    let aa = k * 2.0 * pr.c2 / (g2 * o);
                    e.hess = vec![
                        (iv, iv, h * (sp + v.x * v.x / sp)),
                        (iv + 1, iv, h * v.x * v.y / sp),
                        (iv + 1, iv + 1, h * (sp + v.y * v.y / sp)),
                        (ia, ia, aa),
                        (ia + 1, ia + 1, aa),
                        (io, ia, -k * 2.0 * pr.c2 * a.x / (g2 * o * o)),
                        (io, ia + 1, -k * 2.0 * pr.c2 * a.y / (g2 * o * o)),
                        (io, io, k * 2.0 * pr.c2 * lift / (o * o * o)),
                    ];
                }
            }
            Local::Trust => {
                let rho = self.trust.unwrap_or(f64::INFINITY);
                let iq = self.var(slot, QX);
                let qr = self.sur.expansion.q[slot];
                let dq = Vec3::new(x[iq] - qr.x, x[iq + 1] - qr.y, 0.0);
                let c = 1.0 / (rho * rho);
                e.value = c * (dq.norm_squared() - rho * rho);
                if grad {
                    e.grad = vec![(iq, 2.0 * c * dq.x), (iq + 1, 2.0 * c * dq.y)];
                }
                if hess {
                    e.hess = vec![(iq, iq, 2.0 * c), (iq + 1, iq + 1, 2.0 * c)];
                }
            }
            Local::Psnr(user) => {
                // J ‖q − w‖² − e  (the altitude enters as a constant)
                let iq = self.var(slot, QX);
                let ie = self.var(slot, E + user);
                let w = &self.sur.users[user];
                let j = self.sur.j[user][slot - 1];
                let dx = x[iq] - w.x;
                let dy = x[iq + 1] - w.y;
                let dz = s.altitude - w.z;
                e.value = j * (dx * dx + dy * dy + dz * dz) - x[ie];
                if grad {
                    e.grad = vec![(iq, 2.0 * j * dx), (iq + 1, 2.0 * j * dy), (ie, -1.0)];
                }
                if hess {
                    e.hess = vec![(iq, iq, 2.0 * j), (iq + 1, iq + 1, 2.0 * j)];
                }
            }
        }
        e
    }

    /// A strictly feasible point built from the expansion path, if one exists.
    fn start(&self, e_comm: f64) -> Result<Vec<f64>> {
        let s = self.scenario;
        let pr = &s.propulsion;
        let dt = s.slot_len;
        let r = &self.sur.expansion;
        let mut x = vec![0.0; self.structure.dim()];

        let spare = s.total_energy - e_comm - flight_energy(pr, r, dt)?;
        // shrinking o by a factor (1 − ε) costs at most `hover_part · ε/(1−ε)`
        let hover_part: f64 = (1..=self.k)
            .map(|k| dt * pr.c2 / r.v[k].norm() * (1.0 + r.a[k].norm_squared() / (pr.g0 * pr.g0)))
            .sum();
        let eps = if spare > 0.0 { (1e-3f64).min(0.25 * spare / hover_part) } else { 1e-3 };
        let df = if spare > 0.0 { 0.25 * spare / self.k as f64 } else { 1e-6 };
        let de = 1e-6;
        let mut f_sum = 0.0;
        for slot in 1..=self.k {
            let (q, v, a) = (r.q[slot], r.v[slot], r.a[slot]);
            let o = v.norm() * (1.0 - eps);
            let f = slot_energy_bound(pr, dt, &v, &a, o) + df;
            f_sum += f;
            let set = |x: &mut Vec<f64>, l: usize, val: f64| x[self.var(slot, l)] = val;
            set(&mut x, QX, q.x);
            set(&mut x, QX + 1, q.y);
            set(&mut x, VX, v.x);
            set(&mut x, VX + 1, v.y);
            set(&mut x, AX, a.x);
            set(&mut x, AX + 1, a.y);
            set(&mut x, O, o);
            set(&mut x, F, f);
            for user in 0..self.n {
                let w = &self.sur.users[user];
                set(&mut x, E + user, self.sur.j[user][slot - 1] * (q - w).norm_squared() + de);
            }
        }
        let e_pad = self.k as f64 * de;
        let mu = self.sur.i_db.iter().fold(f64::INFINITY, |m, v| m.min(*v)) - 1e-3 - e_pad;
        x[self.mu()] = mu;
        for user in 0..self.n {
            x[self.sigma(user)] = self.sur.i_db[user] - e_pad - mu;
        }
        x[self.sigma_e()] = s.total_energy - e_comm - f_sum;
        Ok(x)
    }

    fn extract(&self, x: &[f64]) -> (Trajectory, SlackSpeeds) {
        let s = self.scenario;
        let h = s.altitude;
        let mut q = vec![s.start];
        let mut v = vec![s.v0];
        let mut a = vec![s.a0];
        let mut o = Vec::with_capacity(self.k);
        for slot in 1..=self.k {
            let qs = self.vec2(x, slot, QX);
            let vs = self.vec2(x, slot, VX);
            q.push(Vec3::new(qs.x, qs.y, h));
            v.push(vs);
            a.push(self.vec2(x, slot, AX));
            // the largest slack speed the linearized bound allows; it only
            // lowers the propulsion bound and leaves μ unchanged
            o.push(velocity_lower_bound(&self.v_r(slot), &vs).max(0.0).sqrt());
        }
        (Trajectory { q, v, a }, SlackSpeeds { o })
    }
}

impl ConvexProgram for TrajectoryProgram<'_> {
    fn structure(&self) -> &Structure {
        &self.structure
    }

    fn objective(&self, x: &[f64], need: Need) -> FnEval {
        FnEval::affine(x, 0.0, &[(self.mu(), -1.0)], need)
    }

    fn num_inequalities(&self) -> usize {
        self.k * self.locals.len() + self.n + 1
    }

    fn inequality(&self, i: usize, x: &[f64], need: Need) -> FnEval {
        let per = self.locals.len();
        if i < self.k * per {
            return self.local(i / per + 1, self.locals[i % per], x, need);
        }
        let g = i - self.k * per;
        let idx = if g < self.n { self.sigma(g) } else { self.sigma_e() };
        FnEval::affine(x, 0.0, &[(idx, -1.0)], need)
    }

    fn equalities(&self) -> &[EqualityRow] {
        &self.rows
    }
}

#[derive(Debug, Clone)]
pub struct TrajectorySolution {
    pub traj: Trajectory,
    pub slack: SlackSpeeds,
    /// True worst-user PSNR along the returned path, dB.
    pub mu_db: f64,
    /// Optimal value of the last surrogate program, dB.
    pub surrogate_mu_db: f64,
    pub report: SolveReport,
    /// Linearizations that were solved.
    pub passes: usize,
}

fn true_min_psnr(scenario: &Scenario, power: &PowerAllocation, traj: &Trajectory) -> Result<f64> {
    Ok(crate::quality::min_psnr(scenario, traj, power)?.0)
}

fn solve_once(
    scenario: &Scenario,
    power: &PowerAllocation,
    expansion: &Trajectory,
    settings: &TrajectorySettings,
) -> Result<(Trajectory, SlackSpeeds, f64, SolveReport)> {
    let sur = build_surrogate(scenario, power, expansion)?;
    let e_comm = comm_energy(scenario.coeffs_per_block, scenario.slot_len, power);
    let program = TrajectoryProgram::build(scenario, &sur, e_comm, settings.trust_region);
    let start = program.start(e_comm)?;
    let report = solver::solve(&program, &start, &settings.solver)?;
    if report.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible(
            "no dynamics-consistent path satisfies the energy budget".into(),
        ));
    }
    let (traj, slack) = program.extract(&report.x);
    let mu = report.x[program.mu()];
    Ok((traj, slack, mu, report))
}

/// Optimizes the path for fixed powers starting from the feasible `expansion`.
pub fn solve_trajectory(
    scenario: &Scenario,
    power: &PowerAllocation,
    expansion: &Trajectory,
    settings: &TrajectorySettings,
) -> Result<TrajectorySolution> {
    let start_mu = true_min_psnr(scenario, power, expansion)?;
    let (traj, slack, sur_mu, report) = solve_once(scenario, power, expansion, settings)?;
    let mut out = TrajectorySolution {
        mu_db: true_min_psnr(scenario, power, &traj)?,
        traj,
        slack,
        surrogate_mu_db: sur_mu,
        report,
        passes: 1,
    };
    debug!(
        "trajectory pass 1: surrogate {:.6} dB, true {:.6} dB (from {start_mu:.6})",
        out.surrogate_mu_db, out.mu_db
    );
    for pass in 2..=settings.inner_sca_iters.max(1) {
        if slack_tightness(&out.traj, &out.slack) <= settings.sca_gap_tol {
            break;
        }
        let best_mu = out.mu_db;
        let (traj, slack, sur_mu, report) = solve_once(scenario, power, &out.traj, settings)?;
        let mu = true_min_psnr(scenario, power, &traj)?;
        if mu < best_mu {
            debug!("trajectory pass {pass} lowered min PSNR to {mu:.9} dB; stopping");
            break;
        }
        out = TrajectorySolution {
            traj,
            slack,
            mu_db: mu,
            surrogate_mu_db: sur_mu,
            report,
            passes: pass,
        };
    }
    Ok(out)
}

/// Largest per-slot horizontal displacement between two paths, m.
pub fn max_step(a: &Trajectory, b: &Trajectory) -> f64 {
    a.q.iter().zip(&b.q).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{users_at, BlockSpectrum};
    use approx::assert_relative_eq;

    #[test]
    fn velocity_bound_examples() {
        let vr = Vec3::new(10.0, 0.0, 0.0);
        assert_eq!(velocity_lower_bound(&vr, &Vec3::new(20.0, 0.0, 0.0)), 300.0);
        assert_eq!(velocity_lower_bound(&vr, &vr), 100.0);
    }

    #[test]
    fn slack_gap_of_half_speed() {
        let traj = Trajectory {
            q: vec![Vec3::zeros(); 3],
            v: vec![Vec3::new(3.0, 4.0, 0.0); 3],
            a: vec![Vec3::zeros(); 3],
        };
        let o = SlackSpeeds { o: vec![2.5, 5.0] };
        assert_relative_eq!(slack_tightness(&traj, &o), 0.5);
    }

    fn small() -> Scenario {
        let lambda: Vec<f64> = (0..8).map(|i| 1000.0 / (1.0 + i as f64)).collect();
        let mut s = Scenario::table_one(
            users_at(&[[150.0, 250.0], [40.0, 60.0]]),
            BlockSpectrum { variances: lambda, kept: 6 },
        );
        s.slots = 6;
        s.slot_len = 1.0;
        s.end = Vec3::new(120.0, 200.0, 100.0);
        s.v0 = s.cruise_velocity();
        s.validate().unwrap();
        s
    }

    #[test]
    fn surrogate_is_exact_at_expansion_and_matches_quality_model() {
        let s = small();
        let (t, p) = s.initial_solution();
        let sur = build_surrogate(&s, &p, &t).unwrap();
        for n in 0..2 {
            let truth = crate::quality::psnr(&s, &t, &p, n).unwrap();
            assert_relative_eq!(sur.psnr(n, &t), truth, epsilon = 1e-9);
            assert!(sur.j[n].iter().all(|j| *j >= 0.0));
        }
    }

    #[test]
    fn rejects_other_path_loss_exponents() {
        let mut s = small();
        s.channel.alpha = 2.5;
        let (t, p) = s.initial_solution();
        assert!(build_surrogate(&s, &p, &t).is_err());
    }

    #[test]
    fn one_pass_improves_the_worst_user_and_keeps_constraints() {
        let s = small();
        let (t, p) = s.initial_solution();
        let before = crate::quality::min_psnr(&s, &t, &p).unwrap().0;
        let sol = solve_trajectory(&s, &p, &t, &TrajectorySettings::default()).unwrap();
        assert!(sol.report.is_optimal(), "{:?} kkt {}", sol.report.status, sol.report.kkt_residual);
        assert!(sol.mu_db >= sol.surrogate_mu_db - 1e-9);
        assert!(sol.mu_db > before, "{} vs {before}", sol.mu_db);
        let r = crate::kinematics::dynamics_residual(&sol.traj, s.slot_len).unwrap();
        assert!(r.max() <= 1e-6);
        assert!((sol.traj.q[s.slots] - s.end).norm() <= 1e-6);
        let e = crate::kinematics::energy_feasible(&s, &sol.traj, &p).unwrap();
        assert!(e.slack >= -1e-6);
    }

    #[test]
    fn program_gradients_match_differences() {
        let s = small();
        let (t, p) = s.initial_solution();
        let sur = build_surrogate(&s, &p, &t).unwrap();
        let e_comm = comm_energy(s.coeffs_per_block, s.slot_len, &p);
        let prog = TrajectoryProgram::build(&s, &sur, e_comm, Some(50.0));
        let mut x = prog.start(e_comm).unwrap();
        // move off the expansion point
        for (i, v) in x.iter_mut().enumerate() {
            if i < prog.mu() && i % prog.width() < O {
                *v += 0.3 * ((i * 7919) % 13) as f64 / 13.0;
            }
        }
        assert!(solver::check_gradients(&prog, &x, 1e-5) <= 1e-5);
    }
}
