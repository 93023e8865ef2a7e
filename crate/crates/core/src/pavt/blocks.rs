//! Coefficient blocks: tiling, variance sort, selection and power scaling.

use nalgebra::DMatrix;

use super::dct::Coefficients;
use crate::error::{Error, Result};
use crate::kinematics::PowerAllocation;

/// Where a block sits in the coefficient array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPos {
    pub plane: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlock {
    /// Row-major coefficients, `N_p` of them.
    pub coeffs: Vec<f64>,
    /// Mean square of the coefficients (zero-mean model).
    pub lambda: f64,
    /// Raster index before sorting.
    pub index: usize,
    pub pos: BlockPos,
}

/// Block shape in coefficients, rows × columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub rows: usize,
    pub cols: usize,
}

impl BlockShape {
    /// 18 rows by 22 columns: 64 blocks of 396 coefficients per CIF frame.
    pub const CIF: BlockShape = BlockShape { rows: 18, cols: 22 };

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tiles every plane into blocks and sorts them by nonincreasing variance;
/// ties keep raster order.
pub fn blockize_and_sort(coeffs: &Coefficients, shape: BlockShape) -> Result<Vec<CoefficientBlock>> {
    if shape.is_empty() || coeffs.height % shape.rows != 0 || coeffs.width % shape.cols != 0 {
        return Err(Error::Dimension(format!(
            "{}×{} planes are not divisible into {}×{} blocks",
            coeffs.height, coeffs.width, shape.rows, shape.cols
        )));
    }
    let mut out = Vec::new();
    for (plane, p) in coeffs.planes.iter().enumerate() {
        for br in 0..coeffs.height / shape.rows {
            for bc in 0..coeffs.width / shape.cols {
                let pos = BlockPos {
                    plane,
                    row: br * shape.rows,
                    col: bc * shape.cols,
                };
                let view = p.view((pos.row, pos.col), (shape.rows, shape.cols));
                let c: Vec<f64> = view.transpose().iter().copied().collect();
                let lambda = c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64;
                out.push(CoefficientBlock {
                    coeffs: c,
                    lambda,
                    index: out.len(),
                    pos,
                });
            }
        }
    }
    out.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    Ok(out)
}

/// Writes blocks back into a zeroed coefficient array. Blocks not supplied
/// stay zero.
pub fn place_blocks(
    blocks: &[(BlockPos, Vec<f64>)],
    width: usize,
    height: usize,
    planes: usize,
    shape: BlockShape,
) -> Coefficients {
    let mut out = vec![DMatrix::zeros(height, width); planes];
    for (pos, c) in blocks {
        for r in 0..shape.rows {
            for col in 0..shape.cols {
                out[pos.plane][(pos.row + r, pos.col + col)] = c[r * shape.cols + col];
            }
        }
    }
    Coefficients {
        width,
        height,
        planes: out,
    }
}

/// A transmitted block after power scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledBlock {
    pub signal: Vec<f64>,
    /// `s_k = √(p_k / λ_k)`, zero for an all-zero block.
    pub scale: f64,
    pub lambda: f64,
    pub pos: BlockPos,
}

/// Keeps the first `kept` (largest-variance) blocks and scales block `k` by
/// `√(p_k/λ_k)`. Returns the scaled blocks and the discarded ones.
pub fn select_and_scale<'b>(
    blocks: &'b [CoefficientBlock],
    kept: usize,
    power: &PowerAllocation,
) -> Result<(Vec<ScaledBlock>, &'b [CoefficientBlock])> {
    if kept > blocks.len() || power.p.len() < kept {
        return Err(Error::Dimension(format!(
            "keeping {kept} of {} blocks with {} powers",
            blocks.len(),
            power.p.len()
        )));
    }
    let scaled = blocks[..kept]
        .iter()
        .zip(&power.p)
        .map(|(b, &p)| {
            let scale = if b.lambda > 0.0 { (p / b.lambda).sqrt() } else { 0.0 };
            ScaledBlock {
                signal: b.coeffs.iter().map(|x| x * scale).collect(),
                scale,
                lambda: b.lambda,
                pos: b.pos,
            }
        })
        .collect();
    Ok((scaled, &blocks[kept..]))
}

#[cfg(test)]
mod tests {
    use super::super::dct::dct3_forward;
    use super::super::gop::Gop;
    use super::*;

    #[test]
    fn cif_tiling_counts() {
        let g = Gop::synthetic(176, 144, 3, 1);
        let blocks = blockize_and_sort(&dct3_forward(&g).unwrap(), BlockShape::CIF).unwrap();
        assert_eq!(blocks.len(), 192);
        assert!(blocks.iter().all(|b| b.coeffs.len() == 396));
        assert!(blocks.windows(2).all(|w| w[0].lambda >= w[1].lambda));
    }

    #[test]
    fn zero_input_keeps_raster_order() {
        let g = Gop::constant(44, 36, 1, 0.0);
        let blocks = blockize_and_sort(&dct3_forward(&g).unwrap(), BlockShape::CIF).unwrap();
        assert!(blocks.iter().enumerate().all(|(i, b)| b.index == i && b.lambda == 0.0));
    }

    #[test]
    fn rejects_indivisible_planes() {
        let g = Gop::constant(45, 36, 1, 1.0);
        assert!(blockize_and_sort(&dct3_forward(&g).unwrap(), BlockShape::CIF).is_err());
    }

    #[test]
    fn unit_scaling_and_empirical_power() {
        let b = CoefficientBlock {
            coeffs: vec![1.0, -1.0, 1.0, -1.0],
            lambda: 1.0,
            index: 0,
            pos: BlockPos { plane: 0, row: 0, col: 0 },
        };
        let (s, rest) = select_and_scale(std::slice::from_ref(&b), 1, &PowerAllocation { p: vec![1.0] }).unwrap();
        assert_eq!(s[0].scale, 1.0);
        assert!(rest.is_empty());

        let g = Gop::synthetic(176, 144, 3, 2);
        let blocks = blockize_and_sort(&dct3_forward(&g).unwrap(), BlockShape::CIF).unwrap();
        let power = PowerAllocation { p: (0..10).map(|k| 0.001 * (k + 1) as f64).collect() };
        let (s, _) = select_and_scale(&blocks, 10, &power).unwrap();
        for (b, p) in s.iter().zip(&power.p) {
            let emp = b.signal.iter().map(|x| x * x).sum::<f64>() / b.signal.len() as f64;
            assert!((emp - p).abs() <= 0.02 * p);
        }
    }
}
