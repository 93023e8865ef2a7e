//! Orthonormal separable 3-D DCT-II over (row, column, frame).

use nalgebra::DMatrix;

use super::gop::Gop;
use crate::error::{Error, Result};

/// Orthonormal DCT-II matrix: `C[k][i] = a_k cos(π(2i+1)k / 2n)`.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |k, i| {
        let a = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        a * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos()
    })
}

/// Coefficients of a GOP, same layout as the pixels: `frames[t]` is the
/// temporal frequency `t` plane, `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<DMatrix<f64>>,
}

fn mix_time(planes: &[DMatrix<f64>], c: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let (h, w) = planes[0].shape();
    (0..planes.len())
        .map(|k| {
            let mut out = DMatrix::zeros(h, w);
            for (i, p) in planes.iter().enumerate() {
                out += p * c[(k, i)];
            }
            out
        })
        .collect()
}

pub fn dct3_forward(gop: &Gop) -> Result<Coefficients> {
    if gop.frames.is_empty() {
        return Err(Error::Dimension("empty GOP".into()));
    }
    let ch = dct_matrix(gop.height);
    let cw = dct_matrix(gop.width);
    let spatial: Vec<DMatrix<f64>> = gop.frames.iter().map(|f| &ch * f * cw.transpose()).collect();
    Ok(Coefficients {
        width: gop.width,
        height: gop.height,
        planes: mix_time(&spatial, &dct_matrix(gop.frames.len())),
    })
}

pub fn dct3_inverse(coeffs: &Coefficients) -> Result<Gop> {
    if coeffs.planes.is_empty() {
        return Err(Error::Dimension("empty coefficient set".into()));
    }
    let ch = dct_matrix(coeffs.height);
    let cw = dct_matrix(coeffs.width);
    let temporal = mix_time(&coeffs.planes, &dct_matrix(coeffs.planes.len()).transpose());
    Gop::new(temporal.iter().map(|p| ch.transpose() * p * &cw).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_gop_has_only_dc() {
        let g = Gop::constant(8, 6, 3, 7.0);
        let c = dct3_forward(&g).unwrap();
        let dc = 7.0 * (g.samples() as f64).sqrt();
        assert_relative_eq!(c.planes[0][(0, 0)], dc, max_relative = 1e-12);
        let rest: f64 = c.planes.iter().map(|p| p.norm_squared()).sum::<f64>() - dc * dc;
        assert!(rest.abs() < 1e-9);
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = Gop::synthetic(176, 144, 3, 5);
        let c = dct3_forward(&g).unwrap();
        let back = dct3_inverse(&c).unwrap();
        let err = g
            .frames
            .iter()
            .zip(&back.frames)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(err <= 1e-9, "{err}");
        let ep: f64 = g.frames.iter().map(|f| f.norm_squared()).sum();
        let ec: f64 = c.planes.iter().map(|f| f.norm_squared()).sum();
        assert_relative_eq!(ep, ec, max_relative = 1e-6);
    }
}
