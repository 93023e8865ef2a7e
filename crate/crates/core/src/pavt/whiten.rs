//! Orthonormal whitening of a block before transmission.
//!
//! Power-of-two lengths use the normalized Sylvester–Hadamard matrix. Other
//! lengths (396 for CIF blocks) use a deterministic random orthogonal matrix,
//! the Q factor of a seeded Gaussian matrix with the signs of `R`'s diagonal
//! folded in.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    matrix: DMatrix<f64>,
}

fn hadamard(n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let m = h.nrows();
        let mut next = DMatrix::zeros(2 * m, 2 * m);
        next.view_mut((0, 0), (m, m)).copy_from(&h);
        next.view_mut((0, m), (m, m)).copy_from(&h);
        next.view_mut((m, 0), (m, m)).copy_from(&h);
        next.view_mut((m, m), (m, m)).copy_from(&(-&h));
        h = next;
    }
    h / (n as f64).sqrt()
}

impl Whitener {
    pub fn new(len: usize, seed: u64) -> Self {
        if len.is_power_of_two() {
            return Self { matrix: hadamard(len) };
        }
        let mut rng = stream(seed, Purpose::Whitening);
        let g = DMatrix::from_fn(len, len, |_, _| StandardNormal.sample(&mut rng));
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        for (j, mut col) in q.column_iter_mut().enumerate() {
            if r[(j, j)] < 0.0 {
                col.neg_mut();
            }
        }
        Self { matrix: q }
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    pub fn dewhiten(&self, y: &[f64]) -> Vec<f64> {
        (self.matrix.tr_mul(&DVector::from_column_slice(y))).as_slice().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hadamard_concentrates_constant_input() {
        let w = Whitener::new(8, 0);
        let y = w.whiten(&[1.0; 8]);
        assert_relative_eq!(y[0], 8f64.sqrt(), max_relative = 1e-15);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn seeded_matrix_round_trips_and_preserves_power() {
        let w = Whitener::new(396, 11);
        assert_eq!(w, Whitener::new(396, 11));
        let x: Vec<f64> = (0..396).map(|i| ((i * 37) % 101) as f64 - 50.0).collect();
        let y = w.whiten(&x);
        let back = w.dewhiten(&y);
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9);
        let px: f64 = x.iter().map(|v| v * v).sum();
        let py: f64 = y.iter().map(|v| v * v).sum();
        assert_relative_eq!(px, py, max_relative = 1e-9);
    }

    #[test]
    fn spike_energy_is_spread() {
        let w = Whitener::new(396, 3);
        let mut x = vec![0.0; 396];
        x[0] = 1.0;
        let peak = w.whiten(&x).iter().map(|v| v * v).fold(0.0, f64::max);
        assert!(peak < 0.05, "{peak}");
    }
}
