//! Log-barrier interior-point solver for smooth convex programs.
//!
//! The barrier subproblems are centered with damped Newton steps. Linear
//! equalities are handled by infeasible-start Newton, so the starting point only
//! needs to satisfy the inequalities strictly; [`phase_one`] finds such a point
//! when the hint does not.
//!
//! Every Newton system is solved through [`kkt`], which exploits the block
//! structure declared by the program.

pub mod kkt;
mod phase_one;
mod program;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use kkt::{KktFactor, KktLayout, KktMatrix};
pub use phase_one::phase_one;
pub use program::{ConvexProgram, EqualityRow, FnEval, Need, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Duality-gap target `m / t`, relative to `max(1, |f|)`.
    pub tol_gap: f64,
    pub tol_kkt: f64,
    pub tol_eq: f64,
    pub t0: f64,
    /// Growth of `t` between barrier stages.
    pub barrier_factor: f64,
    pub max_newton: usize,
    pub max_stages: usize,
    pub ls_alpha: f64,
    pub ls_beta: f64,
    /// Centering stops when half the squared Newton decrement drops below this.
    pub center_tol: f64,
    /// Stop as soon as a primal-feasible iterate has objective below this.
    pub stop_below: Option<f64>,
    /// Record one trace row per Newton iteration.
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gap: 1e-9,
            tol_kkt: 1e-6,
            tol_eq: 1e-8,
            t0: 1.0,
            barrier_factor: 10.0,
            max_newton: 200,
            max_stages: 60,
            ls_alpha: 0.25,
            ls_beta: 0.5,
            center_tol: 1e-10,
            stop_below: None,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: usize,
    pub newton_iter: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `max(0, maxᵢ gᵢ(x))`.
    pub max_violation: f64,
    /// `‖A x − b‖∞`.
    pub eq_residual: f64,
    /// Max of the scaled stationarity residual and the complementarity gap.
    pub kkt_residual: f64,
    pub newton_iters: usize,
    pub stages: usize,
    pub status: SolveStatus,
    /// Objective at the end of each barrier stage.
    pub stage_objectives: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Writes an iteration trace as CSV (`stage,newton_iter,objective,residual`).
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "newton_iter", "objective", "residual"])?;
    for row in trace {
        w.write_record([
            row.stage.to_string(),
            row.newton_iter.to_string(),
            row.objective.to_string(),
            row.residual.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Checks that every evaluation has gradient and Hessian support in one block.
fn locate_block(structure: &Structure, eval: &FnEval, what: &str) -> Result<Option<usize>> {
    let mut block = None;
    let idx = eval
        .grad
        .iter()
        .map(|g| g.0)
        .chain(eval.hess.iter().flat_map(|h| [h.0, h.1]));
    for i in idx {
        if i >= structure.dim() {
            return Err(Error::Solver(format!("{what}: index {i} out of range")));
        }
        let b = structure.block_of(i);
        match block {
            None => block = Some(b),
            Some(prev) if prev != b => {
                return Err(Error::Solver(format!(
                    "{what}: support spans blocks {prev} and {b}"
                )))
            }
            _ => {}
        }
    }
    Ok(block)
}

/// The objective may have gradient support anywhere, but each Hessian entry
/// must pair variables of the same block.
fn check_hessian_pairs(structure: &Structure, eval: &FnEval) -> Result<()> {
    for &(i, j, _) in &eval.hess {
        if i >= structure.dim() || j >= structure.dim() {
            return Err(Error::Solver(format!(
                "objective: index {i}/{j} out of range"
            )));
        }
        if structure.block_of(i) != structure.block_of(j) {
            return Err(Error::Solver(format!(
                "objective: Hessian entry ({i}, {j}) couples two blocks"
            )));
        }
    }
    Ok(())
}

/// Evaluates every inequality at `x`; `None` when some value is non-finite or
/// not strictly negative.
fn strict_values<P: ConvexProgram + ?Sized>(program: &P, x: &[f64]) -> Option<Vec<f64>> {
    let m = program.num_inequalities();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let g = program.inequality(i, x, Need::Value).value;
        if !(g.is_finite() && g < 0.0) {
            return None;
        }
        out.push(g);
    }
    Some(out)
}

fn eq_residual<P: ConvexProgram + ?Sized>(program: &P, x: &[f64]) -> f64 {
    program
        .equalities()
        .iter()
        .map(|r| r.residual(x).abs())
        .fold(0.0, f64::max)
}

fn dense_grad(n: usize, eval: &FnEval) -> Vec<f64> {
    let mut g = vec![0.0; n];
    for &(i, v) in &eval.grad {
        g[i] += v;
    }
    g
}

struct Newton {
    dx: Vec<f64>,
    nu: Vec<f64>,
    /// `t`-scaled Lagrangian stationarity residual for the Newton multipliers.
    dual_residual: f64,
    grad_f_inf: f64,
    /// Squared Newton decrement.
    lambda2: f64,
}

struct Barrier<'p, P: ConvexProgram + ?Sized> {
    program: &'p P,
    layout: KktLayout,
    kkt: KktMatrix,
}

impl<'p, P: ConvexProgram + ?Sized> Barrier<'p, P> {
    fn new(program: &'p P) -> Self {
        let layout = KktLayout::new(program.structure(), program.equalities());
        let kkt = KktMatrix::new(program.structure(), program.equalities());
        Self {
            program,
            layout,
            kkt,
        }
    }

    fn newton(&mut self, x: &[f64], t: f64) -> Result<Newton> {
        let p = self.program;
        let s = p.structure();
        let n = s.dim();
        let rows = p.equalities();
        self.kkt.clear();
        let mut grad_psi = vec![0.0; n];
        // curvature of f and of the gᵢ, without the rank-one barrier terms
        let mut curvature: Vec<(usize, usize, f64)> = Vec::new();

        let obj = p.objective(x, Need::Hessian);
        check_hessian_pairs(s, &obj)?;
        let mut grad_f_inf = 0.0f64;
        for &(i, v) in &obj.grad {
            grad_psi[i] += t * v;
            grad_f_inf = grad_f_inf.max(v.abs());
        }
        for &(i, j, v) in &obj.hess {
            let b = s.block_of(i);
            self.kkt
                .add_local(b, s.local_index(i), s.local_index(j), t * v);
            curvature.push((i, j, t * v));
        }

        for c in 0..p.num_inequalities() {
            let g = p.inequality(c, x, Need::Hessian);
            let slack = -g.value;
            if !(slack > 0.0 && slack.is_finite()) {
                return Err(Error::Solver(format!(
                    "inequality {c} not strictly satisfied during Newton step"
                )));
            }
            let Some(b) = locate_block(s, &g, "inequality")? else {
                continue;
            };
            let inv = 1.0 / slack;
            for &(i, v) in &g.grad {
                grad_psi[i] += v * inv;
            }
            for &(i, j, v) in &g.hess {
                self.kkt
                    .add_local(b, s.local_index(i), s.local_index(j), v * inv);
                curvature.push((i, j, v * inv));
            }
            let inv2 = inv * inv;
            for (a, &(i, gi)) in g.grad.iter().enumerate() {
                for &(j, gj) in &g.grad[..=a] {
                    self.kkt
                        .add_local(b, s.local_index(i), s.local_index(j), gi * gj * inv2);
                }
            }
        }

        let mut rhs = Vec::with_capacity(n + rows.len());
        rhs.extend(grad_psi.iter().map(|g| -g));
        rhs.extend(rows.iter().map(|r| -r.residual(x)));
        let factor = KktFactor::factor(&self.kkt, &self.layout);
        let sol = factor.solve(&self.kkt, &rhs);
        let dx = sol[..n].to_vec();
        let nu = sol[n..].to_vec();

        // With the linearized multipliers λᵢ⁺ = (1 + ∇gᵢᵀdx/sᵢ)/(t sᵢ) and ν⁺,
        // the Lagrangian gradient (scaled by t) equals -(t∇²f + Σ∇²gᵢ/sᵢ) dx.
        let mut hc = vec![0.0; n];
        for &(i, j, v) in &curvature {
            hc[i] += v * dx[j];
            if i != j {
                hc[j] += v * dx[i];
            }
        }
        let dual_residual = hc.iter().map(|d| d.abs()).fold(0.0, f64::max);

        // dxᵀ H dx rather than -∇ψᵀdx: the latter cancels badly at large t
        let mut padded = dx.clone();
        padded.resize(n + rows.len(), 0.0);
        let mut hdx = vec![0.0; n + rows.len()];
        self.kkt.apply(&padded, &mut hdx);
        let lambda2 = dot(&dx, &hdx[..n]).max(0.0);

        Ok(Newton {
            dx,
            nu,
            dual_residual,
            grad_f_inf,
            lambda2,
        })
    }
}

/// Minimizes `program` with the log-barrier method starting from `start`.
///
/// If `start` does not satisfy every inequality strictly, [`phase_one`] is run
/// first; an infeasible program yields a report with status
/// [`SolveStatus::Infeasible`].
pub fn solve<P: ConvexProgram + ?Sized>(
    program: &P,
    start: &[f64],
    settings: &SolverSettings,
) -> Result<SolveReport> {
    let n = program.dim();
    if start.len() != n {
        return Err(Error::Dimension(format!(
            "start has length {}, program dimension is {n}",
            start.len()
        )));
    }
    let x0 = match phase_one(program, start, settings)? {
        Ok(x) => x,
        Err(report) => return Ok(report),
    };
    barrier_solve(program, x0, settings)
}

fn barrier_solve<P: ConvexProgram + ?Sized>(
    program: &P,
    mut x: Vec<f64>,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    let m = program.num_inequalities();
    let mut barrier = Barrier::new(program);
    let mut nu = vec![0.0; program.equalities().len()];
    let mut t = settings.t0;
    let mut g = strict_values(program, &x)
        .ok_or_else(|| Error::Solver("barrier start is not strictly feasible".into()))?;

    let mut newton_iters = 0usize;
    let mut stages = 0usize;
    let mut stage_objectives = Vec::new();
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut last_dual = f64::INFINITY;
    let mut last_grad_f = 1.0;
    let mut feasible = eq_residual(program, &x) <= 1e-2 * settings.tol_eq;
    let mut stopped_early = false;

    'stages: while stages < settings.max_stages {
        stages += 1;
        let mut centered = false;
        let mut prev_lambda2 = f64::INFINITY;
        for it in 0..settings.max_newton {
            let step = barrier.newton(&x, t)?;
            newton_iters += 1;
            last_dual = step.dual_residual;
            last_grad_f = step.grad_f_inf;
            let f_now = program.objective(&x, Need::Value).value;
            if settings.trace {
                trace.push(TraceRow {
                    stage: stages,
                    newton_iter: it,
                    objective: f_now,
                    residual: step.dual_residual,
                });
            }

            if feasible {
                let lambda2 = step.lambda2;
                // below 1e-6 a decrement that stops shrinking is roundoff
                let stalled = lambda2 <= 1e-6 && lambda2 >= 0.5 * prev_lambda2;
                prev_lambda2 = lambda2;
                if lambda2 / 2.0 <= settings.center_tol || stalled {
                    nu = step.nu;
                    centered = true;
                    break;
                }
                let Some((xn, gn)) =
                    feasible_line_search(program, &x, &g, &step, t, lambda2, settings)
                else {
                    // no progress possible at working precision
                    nu = step.nu;
                    centered = lambda2.abs() <= 1e-6;
                    break;
                };
                x = xn;
                g = gn;
                nu = step.nu;
            } else {
                let (xn, gn, nun, full) =
                    infeasible_line_search(program, &x, &g, &nu, &step, t, settings)?;
                x = xn;
                g = gn;
                nu = nun;
                if full || eq_residual(program, &x) <= 1e-2 * settings.tol_eq {
                    feasible = true;
                }
            }

            if let Some(target) = settings.stop_below {
                if feasible && program.objective(&x, Need::Value).value < target {
                    stopped_early = true;
                    break 'stages;
                }
            }
        }
        stage_objectives.push(program.objective(&x, Need::Value).value);
        if !centered {
            break;
        }
        if m == 0
            || (m as f64) / t <= settings.tol_gap * stage_objectives.last().unwrap().abs().max(1.0)
        {
            status = SolveStatus::Optimal;
            break;
        }
        t *= settings.barrier_factor;
    }

    let objective = program.objective(&x, Need::Value).value;
    let eq_res = eq_residual(program, &x);
    let max_violation = (0..m)
        .map(|i| program.inequality(i, &x, Need::Value).value)
        .fold(0.0f64, f64::max);
    let stationarity = last_dual / (t * last_grad_f.max(1.0));
    let complementarity = if m == 0 {
        0.0
    } else {
        m as f64 / (t * objective.abs().max(1.0))
    };
    let kkt_residual = stationarity.max(complementarity);
    if stopped_early {
        status = SolveStatus::Optimal;
    } else if status == SolveStatus::Optimal
        && (kkt_residual > settings.tol_kkt || eq_res > settings.tol_eq)
    {
        status = SolveStatus::MaxIter;
    }
    Ok(SolveReport {
        x,
        objective,
        max_violation,
        eq_residual: eq_res,
        kkt_residual,
        newton_iters,
        stages,
        status,
        stage_objectives,
        trace,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], s: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + s * b).collect()
}

/// Backtracking on the barrier objective along a primal-feasible direction.
fn feasible_line_search<P: ConvexProgram + ?Sized>(
    program: &P,
    x: &[f64],
    g: &[f64],
    step: &Newton,
    t: f64,
    lambda2: f64,
    settings: &SolverSettings,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let f0 = program.objective(x, Need::Value).value;
    let mut s = 1.0;
    for _ in 0..80 {
        let xn = axpy(x, s, &step.dx);
        if let Some(gn) = strict_values(program, &xn) {
            // inside the quadratic-convergence region the full feasible step
            // is taken; barrier differences are at roundoff level there
            if lambda2 <= 1e-3 && s == 1.0 {
                return Some((xn, gn));
            }
            let f1 = program.objective(&xn, Need::Value).value;
            let dpsi = t * (f1 - f0) + g.iter().zip(&gn).map(|(a, b)| (a / b).ln()).sum::<f64>();
            if dpsi <= -settings.ls_alpha * s * lambda2 {
                return Some((xn, gn));
            }
        }
        s *= settings.ls_beta;
        if s < 1e-14 {
            break;
        }
    }
    None
}

/// Backtracking on the full residual norm for infeasible-start Newton.
#[allow(clippy::type_complexity)]
fn infeasible_line_search<P: ConvexProgram + ?Sized>(
    program: &P,
    x: &[f64],
    g: &[f64],
    nu: &[f64],
    step: &Newton,
    t: f64,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, bool)> {
    let dnu: Vec<f64> = step.nu.iter().zip(nu).map(|(a, b)| a - b).collect();
    let r0 = residual_norm(program, x, g, nu, t)?;
    let mut s = 1.0;
    for _ in 0..80 {
        let xn = axpy(x, s, &step.dx);
        if let Some(gn) = strict_values(program, &xn) {
            let nun = axpy(nu, s, &dnu);
            let r1 = residual_norm(program, &xn, &gn, &nun, t)?;
            if r1 <= (1.0 - settings.ls_alpha * s) * r0 || s == 1.0 && r1 <= r0 {
                return Ok((xn, gn, nun, s == 1.0));
            }
        }
        s *= settings.ls_beta;
        if s < 1e-14 {
            break;
        }
    }
    Err(Error::Solver(
        "infeasible-start Newton made no progress on the residual".into(),
    ))
}

fn residual_norm<P: ConvexProgram + ?Sized>(
    program: &P,
    x: &[f64],
    g: &[f64],
    nu: &[f64],
    t: f64,
) -> Result<f64> {
    let n = program.dim();
    let mut r = dense_grad(n, &program.objective(x, Need::Gradient));
    r.iter_mut().for_each(|v| *v *= t);
    for (i, gi) in g.iter().enumerate() {
        let e = program.inequality(i, x, Need::Gradient);
        for &(j, v) in &e.grad {
            r[j] += v / (-gi);
        }
    }
    let rows = program.equalities();
    let mut acc = 0.0;
    for (row, &mu) in rows.iter().zip(nu) {
        for (&j, &a) in row.idx.iter().zip(&row.val) {
            r[j] += a * mu;
        }
        let e = row.residual(x);
        acc += e * e;
    }
    Ok((acc + r.iter().map(|v| v * v).sum::<f64>()).sqrt())
}

/// Largest relative disagreement between analytic gradients and central
/// differences, over the objective and every inequality, at `x`.
pub fn check_gradients<P: ConvexProgram + ?Sized>(program: &P, x: &[f64], h: f64) -> f64 {
    let n = program.dim();
    let funcs: Vec<Box<dyn Fn(&[f64], Need) -> FnEval + '_>> =
        std::iter::once(Box::new(|x: &[f64], need| program.objective(x, need))
            as Box<dyn Fn(&[f64], Need) -> FnEval>)
        .chain((0..program.num_inequalities()).map(|i| {
            Box::new(move |x: &[f64], need| program.inequality(i, x, need))
                as Box<dyn Fn(&[f64], Need) -> FnEval>
        }))
        .collect();

    let mut worst = 0.0f64;
    let mut xp = x.to_vec();
    for f in &funcs {
        let analytic = dense_grad(n, &f(x, Need::Gradient));
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            xp[j] = x[j] + h;
            let fp = f(&xp, Need::Value).value;
            xp[j] = x[j] - h;
            let fm = f(&xp, Need::Value).value;
            xp[j] = x[j];
            let fd = (fp - fm) / (2.0 * h);
            let denom = analytic[j]
                .abs()
                .max(fd.abs())
                .max(1e-3 * scale)
                .max(f64::MIN_POSITIVE);
            let err = (analytic[j] - fd).abs() / denom;
            if err.is_finite() {
                worst = worst.max(err);
            } else {
                worst = f64::INFINITY;
            }
        }
    }
    worst
}
