//! AWGN link and linear decoders.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    ZeroForcing,
    Llse,
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::ZeroForcing => "zero_forcing",
            DecodeMode::Llse => "llse",
        })
    }
}

/// `ỹ = h y + z` with `z ~ N(0, σ₀²)` i.i.d.
pub fn transmit<R: Rng + ?Sized>(signal: &[f64], h: f64, noise_power: f64, rng: &mut R) -> Vec<f64> {
    if noise_power <= 0.0 {
        return signal.iter().map(|y| h * y).collect();
    }
    let z = Normal::new(0.0, noise_power.sqrt()).expect("finite noise power");
    signal.iter().map(|y| h * y + z.sample(rng)).collect()
}

/// Estimates the coefficients of one block from its received samples.
///
/// Zero forcing inverts the gain chain, `x̂ = ỹ/(h s)`; LLSE shrinks by
/// `h s λ / (h² s² λ + σ₀²)`.
pub fn decode(received: &[f64], h: f64, s: f64, mode: DecodeMode, lambda: f64, noise_power: f64) -> Result<Vec<f64>> {
    let g = h * s;
    let factor = match mode {
        DecodeMode::ZeroForcing => {
            if g <= 0.0 {
                return Err(Error::Invalid(format!("zero-forcing with gain {g}")));
            }
            1.0 / g
        }
        DecodeMode::Llse => {
            let den = g * g * lambda + noise_power;
            if den <= 0.0 {
                0.0
            } else {
                g * lambda / den
            }
        }
    };
    Ok(received.iter().map(|y| factor * y).collect())
}
