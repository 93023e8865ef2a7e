//! Groups of pictures: synthetic generation and raw 8-bit loading.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Luma frames of one group of pictures; each frame is `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gop {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<DMatrix<f64>>,
}

impl Gop {
    pub fn new(frames: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Dimension("a GOP needs at least one frame".into()))?;
        let (height, width) = first.shape();
        if frames.iter().any(|f| f.shape() != (height, width)) {
            return Err(Error::Dimension("frames of a GOP differ in size".into()));
        }
        Ok(Self { width, height, frames })
    }

    pub fn constant(width: usize, height: usize, frames: usize, value: f64) -> Self {
        Self {
            width,
            height,
            frames: vec![DMatrix::from_element(height, width, value); frames],
        }
    }

    pub fn samples(&self) -> usize {
        self.width * self.height * self.frames.len()
    }

    /// Mean squared difference to another GOP of the same shape.
    pub fn mse(&self, other: &Gop) -> Result<f64> {
        if self.frames.len() != other.frames.len() || self.width != other.width || self.height != other.height {
            return Err(Error::Dimension("GOP shapes differ".into()));
        }
        let sum: f64 = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        Ok(sum / self.samples() as f64)
    }

    /// Smooth gradients, two moving rectangles and mild seeded noise, rounded
    /// to 8-bit levels.
    pub fn synthetic(width: usize, height: usize, frames: usize, seed: u64) -> Self {
        let mut rng = stream(seed, Purpose::Source);
        let noise = Normal::new(0.0, 2.0).expect("valid normal");
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (w, h) = (width as f64, height as f64);
        let rects = [
            (0.15 * w, 0.2 * h, 0.25 * w, 0.3 * h, 3.0, 1.0, 205.0),
            (0.6 * w, 0.55 * h, 0.2 * w, 0.25 * h, -2.0, -1.5, 40.0),
        ];
        let frames = (0..frames)
            .map(|t| {
                DMatrix::from_fn(height, width, |y, x| {
                    let (xf, yf) = (x as f64, y as f64);
                    let mut v = 90.0
                        + 60.0 * xf / w
                        + 30.0 * yf / h
                        + 25.0 * (std::f64::consts::TAU * xf / w + phase + 0.2 * t as f64).sin()
                            * (std::f64::consts::PI * yf / h).cos();
                    for &(x0, y0, rw, rh, dx, dy, level) in &rects {
                        let (cx, cy) = (x0 + dx * t as f64, y0 + dy * t as f64);
                        if xf >= cx && xf < cx + rw && yf >= cy && yf < cy + rh {
                            v = level;
                        }
                    }
                    (v + noise.sample(&mut rng)).round().clamp(0.0, 255.0)
                })
            })
            .collect();
        Self { width, height, frames }
    }

    /// Reads the first `frames` frames of a planar 8-bit grayscale file.
    pub fn load_raw(path: &Path, width: usize, height: usize, frames: usize) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let need = width * height * frames;
        if bytes.len() < need {
            return Err(Error::Dimension(format!(
                "{}: {} bytes, need {need} for {frames} frames of {width}×{height}",
                path.display(),
                bytes.len()
            )));
        }
        let frames = bytes[..need]
            .chunks_exact(width * height)
            .map(|f| DMatrix::from_row_iterator(height, width, f.iter().map(|&b| b as f64)))
            .collect();
        Ok(Self { width, height, frames })
    }
}
