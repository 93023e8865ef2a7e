use serde::{Deserialize, Serialize};

/// How much of a function evaluation the solver needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Need {
    Value,
    Gradient,
    Hessian,
}

/// Value, sparse gradient and sparse symmetric Hessian of a scalar function.
///
/// Hessian entries list each unordered pair `(i, j)` once; the solver mirrors
/// off-diagonal entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FnEval {
    pub value: f64,
    pub grad: Vec<(usize, f64)>,
    pub hess: Vec<(usize, usize, f64)>,
}

impl FnEval {
    pub fn value(value: f64) -> Self {
        Self {
            value,
            ..Self::default()
        }
    }

    /// Affine function `c₀ + Σ cᵢ xᵢ`.
    pub fn affine(x: &[f64], constant: f64, coeffs: &[(usize, f64)], need: Need) -> Self {
        let value = constant + coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>();
        let grad = if need >= Need::Gradient {
            coeffs.to_vec()
        } else {
            Vec::new()
        };
        Self {
            value,
            grad,
            hess: Vec::new(),
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.value *= s;
        self.grad.iter_mut().for_each(|g| g.1 *= s);
        self.hess.iter_mut().for_each(|h| h.2 *= s);
        self
    }
}

/// One sparse row of the linear equality system `A x = b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualityRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
    pub rhs: f64,
}

impl EqualityRow {
    pub fn new(idx: Vec<usize>, val: Vec<f64>) -> Self {
        assert_eq!(idx.len(), val.len());
        Self { idx, val, rhs: 0.0 }
    }

    pub fn with_rhs(mut self, rhs: f64) -> Self {
        self.rhs = rhs;
        self
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(&self.val)
            .map(|(&j, &a)| a * x[j])
            .sum::<f64>()
            - self.rhs
    }
}

/// Partition of the variables into blocks, each tagged with a stage.
///
/// Every inequality constraint and the objective must have gradient and
/// Hessian support inside a single block. Blocks with a stage are ordered into
/// the banded part of the KKT system; blocks without one (global variables)
/// go to the dense border.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    block_of: Vec<usize>,
    stage: Vec<Option<usize>>,
    local: Vec<usize>,
}

impl Structure {
    pub fn new(block_of: Vec<usize>, stage: Vec<Option<usize>>) -> Self {
        let mut counts = vec![0usize; stage.len()];
        let local = block_of
            .iter()
            .map(|&b| {
                let l = counts[b];
                counts[b] += 1;
                l
            })
            .collect();
        Self {
            block_of,
            stage,
            local,
        }
    }

    /// All variables in a single block.
    pub fn dense(n: usize) -> Self {
        Self::new(vec![0; n], vec![Some(0)])
    }

    pub fn dim(&self) -> usize {
        self.block_of.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.stage.len()
    }

    pub fn block_of(&self, var: usize) -> usize {
        self.block_of[var]
    }

    pub fn local_index(&self, var: usize) -> usize {
        self.local[var]
    }

    pub fn stage_of_var(&self, var: usize) -> Option<usize> {
        self.stage[self.block_of[var]]
    }

    pub fn block_stage(&self, block: usize) -> Option<usize> {
        self.stage[block]
    }

    /// Variable indices of each block, in index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.stage.len()];
        for (v, &b) in self.block_of.iter().enumerate() {
            out[b].push(v);
        }
        out
    }

    /// Appends a variable to `block`, returning its index.
    pub fn push_var(&mut self, block: usize) -> usize {
        let l = self.block_of.iter().filter(|&&b| b == block).count();
        self.block_of.push(block);
        self.local.push(l);
        self.block_of.len() - 1
    }

    /// Appends a new block, returning its index.
    pub fn push_block(&mut self, stage: Option<usize>) -> usize {
        self.stage.push(stage);
        self.stage.len() - 1
    }
}

/// A smooth convex program
///
/// ```text
/// minimize f(x)  subject to  gᵢ(x) ≤ 0,  A x = b
/// ```
///
/// with convex, twice differentiable `f` and `gᵢ`.
pub trait ConvexProgram: Sync {
    fn structure(&self) -> &Structure;

    fn objective(&self, x: &[f64], need: Need) -> FnEval;

    fn num_inequalities(&self) -> usize;

    fn inequality(&self, i: usize, x: &[f64], need: Need) -> FnEval;

    fn equalities(&self) -> &[EqualityRow];

    fn dim(&self) -> usize {
        self.structure().dim()
    }
}
