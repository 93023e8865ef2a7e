//! Structured solver for the Newton KKT system
//!
//! ```text
//! [ H  Aᵀ ] [dx]   [r_x]
//! [ A  0  ] [ν ] = [r_e]
//! ```
//!
//! `H` is block diagonal (one dense block per variable block) and `A` is
//! sparse. Variables and equality rows are ordered by stage so that the bulk of
//! the matrix is banded; global variables and rows that couple distant stages
//! form a small dense border. The regularized quasi-definite matrix is
//! factored without pivoting and the solution is polished by iterative
//! refinement against the exact system.

use nalgebra::{DMatrix, DVector};

use super::program::{EqualityRow, Structure};

const PRIMAL_REG: f64 = 1e-11;
const PIVOT_FLOOR: f64 = 1e-30;
const MAX_REFINE: usize = 12;

/// Symmetric KKT matrix in structured form.
#[derive(Debug, Clone)]
pub struct KktMatrix {
    n: usize,
    /// Dense Hessian blocks, row-major, indexed like `Structure::members`.
    blocks: Vec<Vec<f64>>,
    members: Vec<Vec<usize>>,
    rows: Vec<EqualityRow>,
}

impl KktMatrix {
    pub fn new(structure: &Structure, rows: &[EqualityRow]) -> Self {
        let members = structure.members();
        let blocks = members
            .iter()
            .map(|m| vec![0.0; m.len() * m.len()])
            .collect();
        Self {
            n: structure.dim(),
            blocks,
            members,
            rows: rows.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.rows.len()
    }

    pub fn clear(&mut self) {
        for b in &mut self.blocks {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Adds `v` to `H[(a, b)]` (local indices inside `block`), mirrored.
    pub fn add_local(&mut self, block: usize, a: usize, b: usize, v: f64) {
        let len = self.members[block].len();
        let data = &mut self.blocks[block];
        data[a * len + b] += v;
        if a != b {
            data[b * len + a] += v;
        }
    }

    /// `y = K x` with the unregularized matrix.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (block, vars) in self.members.iter().enumerate() {
            let len = vars.len();
            let data = &self.blocks[block];
            for (a, &ia) in vars.iter().enumerate() {
                let mut acc = 0.0;
                for (b, &ib) in vars.iter().enumerate() {
                    acc += data[a * len + b] * x[ib];
                }
                y[ia] += acc;
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            let ri = self.n + r;
            let mut acc = 0.0;
            for (&j, &a) in row.idx.iter().zip(&row.val) {
                acc += a * x[j];
                y[j] += a * x[ri];
            }
            y[ri] += acc;
        }
    }
}

/// Ordering of KKT unknowns into a banded part followed by a dense border.
#[derive(Debug, Clone)]
pub struct KktLayout {
    /// Position of each KKT unknown in the permuted system.
    pos: Vec<usize>,
    /// Unknown at each permuted position.
    order: Vec<usize>,
    band_len: usize,
    half_bw: usize,
}

impl KktLayout {
    pub fn new(structure: &Structure, rows: &[EqualityRow]) -> Self {
        let n = structure.dim();
        let m = rows.len();
        // (is_border, stage, kind, index)
        let mut keys: Vec<(bool, usize, u8, usize)> = Vec::with_capacity(n + m);
        for j in 0..n {
            match structure.stage_of_var(j) {
                Some(s) => keys.push((false, s, 0, j)),
                None => keys.push((true, 0, 0, j)),
            }
        }
        for (r, row) in rows.iter().enumerate() {
            let mut lo = usize::MAX;
            let mut hi = 0usize;
            let mut global = row.idx.is_empty();
            for &j in &row.idx {
                match structure.stage_of_var(j) {
                    Some(s) => {
                        lo = lo.min(s);
                        hi = hi.max(s);
                    }
                    None => global = true,
                }
            }
            if global || hi - lo > 1 {
                keys.push((true, 0, 1, n + r));
            } else {
                keys.push((false, hi, 1, n + r));
            }
        }
        keys.sort_unstable();
        let order: Vec<usize> = keys.iter().map(|k| k.3).collect();
        let band_len = keys.iter().filter(|k| !k.0).count();
        let mut pos = vec![0; n + m];
        for (p, &u) in order.iter().enumerate() {
            pos[u] = p;
        }

        let mut half_bw = 0usize;
        let mut note = |a: usize, b: usize| {
            let (pa, pb) = (pos[a], pos[b]);
            if pa < band_len && pb < band_len {
                half_bw = half_bw.max(pa.abs_diff(pb));
            }
        };
        for vars in structure.members() {
            for &a in &vars {
                for &b in &vars {
                    note(a, b);
                }
            }
        }
        for (r, row) in rows.iter().enumerate() {
            for &j in &row.idx {
                note(n + r, j);
            }
        }
        Self {
            pos,
            order,
            band_len,
            half_bw,
        }
    }

    pub fn border_len(&self) -> usize {
        self.order.len() - self.band_len
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bw
    }
}

/// LDLᵀ factors of the permuted, regularized KKT matrix.
pub struct KktFactor<'a> {
    layout: &'a KktLayout,
    n_var: usize,
    /// Band part of `L` (unit diagonal omitted), row-major with `half_bw + 1`
    /// slots per row; slot `c` of row `i` holds column `i - half_bw + c`.
    band: Vec<f64>,
    diag: Vec<f64>,
    /// `L_bb⁻¹ K_bbᵀ-coupling` columns, one per border unknown.
    border_z: Vec<Vec<f64>>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<'a> KktFactor<'a> {
    pub fn factor(matrix: &KktMatrix, layout: &'a KktLayout) -> Self {
        let nb = layout.band_len;
        let w = layout.half_bw;
        let stride = w + 1;
        let n_var = matrix.n;
        let mut band = vec![0.0; nb * stride];
        let nr = layout.border_len();
        // border coupling rows: border unknown × band position
        let mut coupling = vec![vec![0.0; nb]; nr];
        let mut border = DMatrix::<f64>::zeros(nr, nr);

        let mut put = |a: usize, b: usize, v: f64, band: &mut Vec<f64>| {
            let (pa, pb) = (layout.pos[a], layout.pos[b]);
            match (pa < nb, pb < nb) {
                (true, true) => {
                    let (i, j) = if pa >= pb { (pa, pb) } else { (pb, pa) };
                    band[i * stride + (j + w - i)] += v;
                }
                (false, true) => coupling[pa - nb][pb] += v,
                (true, false) => coupling[pb - nb][pa] += v,
                (false, false) => {
                    border[(pa - nb, pb - nb)] += v;
                    if pa != pb {
                        border[(pb - nb, pa - nb)] += v;
                    }
                }
            }
        };

        for (block, vars) in matrix.members.iter().enumerate() {
            let len = vars.len();
            let data = &matrix.blocks[block];
            for (a, &ia) in vars.iter().enumerate() {
                for (b, &ib) in vars.iter().enumerate().take(a + 1) {
                    let mut v = data[a * len + b];
                    if a == b {
                        v += PRIMAL_REG * v.abs().max(1.0);
                    }
                    put(ia, ib, v, &mut band);
                }
            }
        }
        for (r, row) in matrix.rows.iter().enumerate() {
            let ri = n_var + r;
            for (&j, &a) in row.idx.iter().zip(&row.val) {
                put(ri, j, a, &mut band);
            }
        }

        // banded LDLᵀ without pivoting; expected pivot sign is + for
        // variables and − for equality rows
        let mut diag = vec![0.0; nb];
        for j in 0..nb {
            let lo = j.saturating_sub(w);
            let mut d = band[j * stride + w];
            let mut mag = d.abs();
            for k in lo..j {
                let l = band[j * stride + (k + w - j)];
                let c = l * l * diag[k];
                d -= c;
                mag = mag.max(c.abs());
            }
            let is_var = layout.order[j] < n_var;
            // relative floor: a fixed dual regularization would swamp the
            // tiny row pivots A H⁻¹ Aᵀ that appear when H is very stiff
            let floor = PIVOT_FLOOR.max(1e-14 * mag);
            if is_var && d < floor {
                d = floor.max(d.abs());
            } else if !is_var && d > -floor {
                d = -(floor.max(d.abs()));
            }
            diag[j] = d;
            let hi = (j + w).min(nb - 1);
            for i in (j + 1)..=hi {
                let lo_i = i.saturating_sub(w).max(lo);
                let mut v = band[i * stride + (j + w - i)];
                for k in lo_i..j {
                    v -= band[i * stride + (k + w - i)] * band[j * stride + (k + w - j)] * diag[k];
                }
                band[i * stride + (j + w - i)] = v / d;
            }
        }

        let mut factor = Self {
            layout,
            n_var,
            band,
            diag,
            border_z: Vec::new(),
            schur: None,
        };

        if nr > 0 {
            let mut zs = Vec::with_capacity(nr);
            for c in coupling.into_iter() {
                let mut z = c;
                factor.forward(&mut z);
                zs.push(z);
            }
            for a in 0..nr {
                for b in 0..=a {
                    let mut acc = 0.0;
                    for ((za, zb), d) in zs[a].iter().zip(&zs[b]).zip(&factor.diag) {
                        acc += za * zb / d;
                    }
                    border[(a, b)] -= acc;
                    if a != b {
                        border[(b, a)] -= acc;
                    }
                }
            }
            for a in 0..nr {
                let u = layout.order[nb + a];
                if u < n_var {
                    border[(a, a)] += PRIMAL_REG * border[(a, a)].abs().max(1.0);
                }
            }
            factor.border_z = zs;
            factor.schur = Some(border.lu());
        }
        factor
    }

    fn forward(&self, z: &mut [f64]) {
        let w = self.layout.half_bw;
        let stride = w + 1;
        for i in 0..z.len() {
            let lo = i.saturating_sub(w);
            let mut v = z[i];
            for k in lo..i {
                v -= self.band[i * stride + (k + w - i)] * z[k];
            }
            z[i] = v;
        }
    }

    fn backward(&self, z: &mut [f64]) {
        let w = self.layout.half_bw;
        let stride = w + 1;
        let nb = z.len();
        for i in (0..nb).rev() {
            let hi = (i + w).min(nb.saturating_sub(1));
            let mut v = z[i];
            for k in (i + 1)..=hi {
                v -= self.band[k * stride + (i + w - k)] * z[k];
            }
            z[i] = v;
        }
    }

    /// Solves the regularized system once (no refinement).
    fn solve_once(&self, rhs: &[f64]) -> Vec<f64> {
        let nb = self.layout.band_len;
        let nr = self.layout.border_len();
        let mut permuted: Vec<f64> = self.layout.order.iter().map(|&u| rhs[u]).collect();
        let (band_part, border_part) = permuted.split_at_mut(nb);

        self.forward(band_part);
        if nr > 0 {
            let mut s_rhs = DVector::from_iterator(nr, border_part.iter().copied());
            for (a, z) in self.border_z.iter().enumerate() {
                let mut acc = 0.0;
                for ((zk, yk), d) in z.iter().zip(band_part.iter()).zip(&self.diag) {
                    acc += zk * yk / d;
                }
                s_rhs[a] -= acc;
            }
            let xr = self
                .schur
                .as_ref()
                .and_then(|lu| lu.solve(&s_rhs))
                .unwrap_or_else(|| DVector::zeros(nr));
            for (a, z) in self.border_z.iter().enumerate() {
                let xa = xr[a];
                for (yk, zk) in band_part.iter_mut().zip(z) {
                    *yk -= zk * xa;
                }
            }
            border_part.copy_from_slice(xr.as_slice());
        }
        for (yk, d) in band_part.iter_mut().zip(&self.diag) {
            *yk /= d;
        }
        self.backward(band_part);

        let mut out = vec![0.0; rhs.len()];
        for (p, &u) in self.layout.order.iter().enumerate() {
            out[u] = permuted[p];
        }
        out
    }

    /// Solves `K x = rhs` with iterative refinement against `matrix`.
    pub fn solve(&self, matrix: &KktMatrix, rhs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rhs.len(), self.n_var + matrix.rows.len());
        let n = self.n_var;
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let a_max = matrix
            .rows
            .iter()
            .flat_map(|r| r.val.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let var_scale = inf(&rhs[..n]).max(f64::MIN_POSITIVE);
        let row_scale = inf(&rhs[n..]);
        // the two halves are measured separately: the gradient part can be
        // many orders of magnitude larger than the equality residuals
        let measure = |x: &[f64], r: &[f64]| {
            let row_ref = row_scale
                .max(1e-16 * a_max * inf(&x[..n]))
                .max(f64::MIN_POSITIVE);
            (inf(&r[..n]) / var_scale).max(inf(&r[n..]) / row_ref)
        };
        let mut x = self.solve_once(rhs);
        let mut resid = vec![0.0; rhs.len()];
        let mut best = f64::INFINITY;
        let mut best_x = x.clone();
        for _ in 0..MAX_REFINE {
            matrix.apply(&x, &mut resid);
            for (r, b) in resid.iter_mut().zip(rhs) {
                *r = b - *r;
            }
            let err = measure(&x, &resid);
            if err < best {
                best = err;
                best_x.copy_from_slice(&x);
            } else {
                break;
            }
            if err <= 1e-14 {
                break;
            }
            let dx = self.solve_once(&resid);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        best_x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::program::Structure;

    fn dense_solve(k: &DMatrix<f64>, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        k.clone().lu().solve(&b).unwrap().as_slice().to_vec()
    }

    fn to_dense(m: &KktMatrix) -> DMatrix<f64> {
        let d = m.dim();
        let mut out = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            m.apply(&e, &mut col);
            for i in 0..d {
                out[(i, j)] = col[i];
            }
        }
        out
    }

    #[test]
    fn chain_with_border_matches_dense_solve() {
        // 5 stages of 2 variables, a global variable, chain rows and one
        // global row
        let mut block_of = Vec::new();
        let mut stage = Vec::new();
        for s in 0..5 {
            block_of.extend([s, s]);
            stage.push(Some(s));
        }
        block_of.push(5);
        stage.push(None);
        let structure = Structure::new(block_of, stage);
        let mut rows = Vec::new();
        for s in 1..5 {
            rows.push(EqualityRow::new(
                vec![2 * s, 2 * (s - 1), 2 * (s - 1) + 1],
                vec![1.0, -1.0, -0.5],
            ));
        }
        rows.push(EqualityRow::new(
            (0..11).collect(),
            (0..11).map(|i| 1.0 + i as f64 * 0.1).collect(),
        ));
        let mut m = KktMatrix::new(&structure, &rows);
        for s in 0..5 {
            m.add_local(s, 0, 0, 2.0 + s as f64);
            m.add_local(s, 1, 1, 1.0);
            m.add_local(s, 0, 1, 0.3);
        }
        m.add_local(5, 0, 0, 0.0);
        let layout = KktLayout::new(&structure, &rows);
        assert!(layout.border_len() == 2);
        let f = KktFactor::factor(&m, &layout);
        let rhs: Vec<f64> = (0..m.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = f.solve(&m, &rhs);
        let want = dense_solve(&to_dense(&m), &rhs);
        for (a, b) in x.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_dense_block_without_rows() {
        let structure = Structure::new(vec![0; 3], vec![Some(0)]);
        let mut m = KktMatrix::new(&structure, &[]);
        let h = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        for a in 0..3 {
            for b in 0..=a {
                m.add_local(0, a, b, h[a][b]);
            }
        }
        let layout = KktLayout::new(&structure, &[]);
        let f = KktFactor::factor(&m, &layout);
        let rhs = [1.0, -2.0, 0.5];
        let x = f.solve(&m, &rhs);
        let want = dense_solve(&to_dense(&m), &rhs);
        for (a, b) in x.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
