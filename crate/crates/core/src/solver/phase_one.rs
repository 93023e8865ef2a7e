//! Phase-I search for a strictly feasible starting point.
//!
//! Constraints violated at the hint are made elastic: each block that owns a
//! violated constraint gets a slack `s_b`, and all block slacks are tied to one
//! global slack `s` by equality rows. Keeping the slacks block-local preserves
//! the structure the KKT solver relies on. Minimizing `s` either drives it
//! below zero (a strictly feasible point) or certifies infeasibility.

use std::collections::BTreeMap;

use super::program::{ConvexProgram, EqualityRow, FnEval, Need, Structure};
use super::{barrier_solve, eq_residual, strict_values, SolveReport, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

const SLACK_FLOOR: f64 = -1.0;

struct PhaseOne<'a, P: ConvexProgram + ?Sized> {
    inner: &'a P,
    structure: Structure,
    n: usize,
    /// Slack variable attached to each inner inequality, if elastic.
    elastic: Vec<Option<usize>>,
    s: usize,
    rows: Vec<EqualityRow>,
}

impl<P: ConvexProgram + ?Sized> ConvexProgram for PhaseOne<'_, P> {
    fn structure(&self) -> &Structure {
        &self.structure
    }

    fn objective(&self, x: &[f64], need: Need) -> FnEval {
        FnEval::affine(x, 0.0, &[(self.s, 1.0)], need)
    }

    fn num_inequalities(&self) -> usize {
        self.elastic.len() + 1
    }

    fn inequality(&self, i: usize, x: &[f64], need: Need) -> FnEval {
        if i == self.elastic.len() {
            return FnEval::affine(x, SLACK_FLOOR, &[(self.s, -1.0)], need);
        }
        let mut g = self.inner.inequality(i, &x[..self.n], need);
        if let Some(sb) = self.elastic[i] {
            g.value -= x[sb];
            if need >= Need::Gradient {
                g.grad.push((sb, -1.0));
            }
        }
        g
    }

    fn equalities(&self) -> &[EqualityRow] {
        &self.rows
    }
}

/// Finds a point satisfying every inequality strictly and the equalities.
///
/// Returns `Ok(Ok(x))` on success. When the slack cannot be driven negative the
/// program is infeasible and `Ok(Err(report))` carries the best phase-I point
/// with status [`SolveStatus::Infeasible`]. A hint that already satisfies all
/// inequalities strictly is returned unchanged; the equalities are then left
/// to the infeasible-start Newton iterations of the main solve.
pub fn phase_one<P: ConvexProgram + ?Sized>(
    program: &P,
    hint: &[f64],
    settings: &SolverSettings,
) -> Result<std::result::Result<Vec<f64>, SolveReport>> {
    let n = program.dim();
    if hint.len() != n {
        return Err(Error::Dimension(format!(
            "hint has length {}, program dimension is {n}",
            hint.len()
        )));
    }
    if strict_values(program, hint).is_some() {
        return Ok(Ok(hint.to_vec()));
    }

    let m = program.num_inequalities();
    let mut structure = program.structure().clone();
    let mut block_slack: BTreeMap<usize, usize> = BTreeMap::new();
    let mut elastic = vec![None; m];
    let mut worst = f64::NEG_INFINITY;
    let mut unmovable = false;
    for (i, slot) in elastic.iter_mut().enumerate() {
        let g = program.inequality(i, hint, Need::Gradient);
        if !g.value.is_finite() {
            return Err(Error::Solver(format!(
                "inequality {i} is undefined at the phase-I hint"
            )));
        }
        if g.value < 0.0 {
            continue;
        }
        let Some(&(v, _)) = g.grad.first() else {
            // a violated constant constraint cannot be repaired
            unmovable = true;
            continue;
        };
        let block = structure.block_of(v);
        let sb = *block_slack
            .entry(block)
            .or_insert_with(|| structure.push_var(block));
        *slot = Some(sb);
        worst = worst.max(g.value);
    }
    if unmovable {
        return Ok(Err(infeasible_report(program, hint)));
    }

    let global = structure.push_block(None);
    let s = structure.push_var(global);
    let mut rows = program.equalities().to_vec();
    for &sb in block_slack.values() {
        rows.push(EqualityRow::new(vec![sb, s], vec![1.0, -1.0]));
    }
    let phase = PhaseOne {
        inner: program,
        structure,
        n,
        elastic,
        s,
        rows,
    };

    let start_slack = worst + 1.0;
    let mut x0 = hint.to_vec();
    x0.resize(phase.dim(), start_slack);

    let phase_settings = SolverSettings {
        tol_gap: settings.tol_gap.max(1e-8),
        stop_below: Some(-1e-3),
        trace: false,
        ..*settings
    };
    let report = barrier_solve(&phase, x0, &phase_settings)?;
    let x = report.x[..n].to_vec();
    let feasible = report.x[s] < 0.0
        && strict_values(program, &x).is_some()
        && eq_residual(program, &x) <= settings.tol_eq;
    log::debug!(
        "phase I: slack {:.3e} after {} Newton iterations",
        report.x[s],
        report.newton_iters
    );
    if feasible {
        Ok(Ok(x))
    } else {
        Ok(Err(infeasible_report(program, &x)))
    }
}

fn infeasible_report<P: ConvexProgram + ?Sized>(program: &P, x: &[f64]) -> SolveReport {
    let max_violation = (0..program.num_inequalities())
        .map(|i| program.inequality(i, x, Need::Value).value)
        .fold(0.0f64, f64::max);
    SolveReport {
        x: x.to_vec(),
        objective: program.objective(x, Need::Value).value,
        max_violation,
        eq_residual: eq_residual(program, x),
        kkt_residual: f64::INFINITY,
        newton_iters: 0,
        stages: 0,
        status: SolveStatus::Infeasible,
        stage_objectives: Vec::new(),
        trace: Vec::new(),
    }
}
