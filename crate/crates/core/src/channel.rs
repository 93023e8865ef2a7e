//! Line-of-sight air-to-ground channel and unit conversions.
//!
//! The small-scale fading term is fixed to one, so the instantaneous power
//! gain equals the average gain `β₀ / d^α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Issue, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Linear power gain at the 1 m reference distance.
    pub beta0: f64,
    pub alpha: f64,
    /// Receiver noise power in watts.
    pub noise_power: f64,
}

impl ChannelParams {
    /// β₀ = −40 dB, α = 2, σ₀² = −109 dBm.
    pub fn table_one() -> Self {
        Self {
            beta0: db_to_linear(-40.0),
            alpha: 2.0,
            noise_power: dbm_to_watts(-109.0),
        }
    }

    pub fn check(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            issues.push(Issue::new("channel.beta0", format!("must be positive, got {}", self.beta0)));
        }
        if !(2.0..=6.0).contains(&self.alpha) {
            issues.push(Issue::new(
                "channel.path_loss_exponent",
                format!("must lie in [2, 6], got {}", self.alpha),
            ));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            issues.push(Issue::new(
                "channel.noise_power",
                format!("must be positive, got {}", self.noise_power),
            ));
        }
        issues
    }
}

pub fn distance(q: &Vec3, w: &Vec3) -> f64 {
    (q - w).norm()
}

/// Average channel power gain `β₀ / d^α`.
pub fn avg_gain(params: &ChannelParams, q: &Vec3, w: &Vec3) -> Result<f64> {
    let d = distance(q, w);
    if d <= 0.0 {
        return Err(Error::Invalid("channel gain undefined at zero distance".into()));
    }
    Ok(if params.alpha == 2.0 {
        params.beta0 / (d * d)
    } else {
        params.beta0 / d.powf(params.alpha)
    })
}

/// Squared instantaneous gain `h²`; equal to the average gain under LoS.
pub fn inst_gain_squared(params: &ChannelParams, q: &Vec3, w: &Vec3) -> Result<f64> {
    avg_gain(params, q, w)
}

/// Instantaneous amplitude gain `h = √β`.
pub fn inst_gain(params: &ChannelParams, q: &Vec3, w: &Vec3) -> Result<f64> {
    inst_gain_squared(params, q, w).map(f64::sqrt)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p() -> ChannelParams {
        ChannelParams {
            beta0: 1e-4,
            alpha: 2.0,
            noise_power: 1.0,
        }
    }

    #[test]
    fn distances() {
        let q = Vec3::new(0.0, 300.0, 100.0);
        assert_relative_eq!(distance(&q, &Vec3::new(0.0, 300.0, 0.0)), 100.0);
        assert_relative_eq!(distance(&q, &Vec3::zeros()), 316.2278, epsilon = 1e-4);
        assert_eq!(distance(&q, &q), 0.0);
    }

    #[test]
    fn gains() {
        let w = Vec3::zeros();
        assert_relative_eq!(avg_gain(&p(), &Vec3::new(0.0, 0.0, 100.0), &w).unwrap(), 1e-8);
        assert_relative_eq!(avg_gain(&p(), &Vec3::new(0.0, 0.0, 1.0), &w).unwrap(), 1e-4);
        let q = Vec3::new(0.0, 300.0, 100.0);
        assert_relative_eq!(avg_gain(&p(), &q, &w).unwrap(), 1e-9, max_relative = 1e-12);
        assert_relative_eq!(inst_gain_squared(&p(), &q, &w).unwrap(), 1e-9, max_relative = 1e-12);
        assert!(avg_gain(&p(), &w, &w).is_err());
    }

    #[test]
    fn conversions() {
        assert_relative_eq!(dbm_to_watts(10.0), 0.01, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(-109.0), 1.2589e-14, max_relative = 1e-4);
        assert_eq!(db_to_linear(0.0), 1.0);
        assert_relative_eq!(db_to_linear(-40.0), 1e-4, max_relative = 1e-15);
        for x in [-120.0, -3.3, 0.0, 17.5, 40.0] {
            assert_relative_eq!(watts_to_dbm(dbm_to_watts(x)), x, max_relative = 1e-12);
            assert_relative_eq!(linear_to_db(db_to_linear(x)), x, max_relative = 1e-12);
        }
    }

    #[test]
    fn table_one_is_valid() {
        assert!(ChannelParams::table_one().check().is_empty());
        let bad = ChannelParams {
            alpha: 1.0,
            ..p()
        };
        assert_eq!(bad.check().len(), 1);
    }
}
