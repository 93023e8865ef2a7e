//! Analytic reconstruction distortion, MSE and PSNR per user.
//!
//! Block `k` is sent in slot `k` from position `q[k]`. With zero-forcing
//! decoding its per-coefficient error is `σ₀²λ_k / (h_k² p_k)`; blocks beyond
//! `K` are dropped and cost their full variance.

use crate::channel::inst_gain_squared;
use crate::error::{Error, Result};
use crate::kinematics::{PowerAllocation, Trajectory, P_FLOOR};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionBreakdown {
    /// `σ₀²λ_k / (h_k² p_k)` for each transmitted slot.
    pub noise_terms: Vec<f64>,
    /// `Σ_{m>K} λ_m`.
    pub truncation: f64,
    /// `N_p (Σ noise + truncation)`.
    pub total: f64,
}

impl DistortionBreakdown {
    pub fn noise(&self) -> f64 {
        self.noise_terms.iter().sum()
    }
}

fn check_inputs(scenario: &Scenario, traj: &Trajectory, power: &PowerAllocation, user: usize) -> Result<()> {
    let k = scenario.spectrum.kept;
    if user >= scenario.users.len() {
        return Err(Error::Invalid(format!(
            "user index {user} out of range for {} users",
            scenario.users.len()
        )));
    }
    if power.p.len() != k || traj.slots() != k {
        return Err(Error::Dimension(format!(
            "{} powers and {} trajectory slots for {k} transmitted blocks",
            power.p.len(),
            traj.slots()
        )));
    }
    Ok(())
}

/// Expected reconstruction distortion of user `user` (0-based index).
pub fn expected_distortion(
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerAllocation,
    user: usize,
) -> Result<DistortionBreakdown> {
    check_inputs(scenario, traj, power, user)?;
    let w = &scenario.users[user].position;
    let lambda = scenario.spectrum.kept_variances();
    let mut noise_terms = Vec::with_capacity(lambda.len());
    for (k, (&l, &p)) in lambda.iter().zip(&power.p).enumerate() {
        let h2 = inst_gain_squared(&scenario.channel, &traj.q[k + 1], w)?;
        noise_terms.push(scenario.channel.noise_power * l / (h2 * p.max(P_FLOOR)));
    }
    let truncation = scenario.spectrum.truncation();
    let total = scenario.coeffs_per_block as f64 * (noise_terms.iter().sum::<f64>() + truncation);
    Ok(DistortionBreakdown {
        noise_terms,
        truncation,
        total,
    })
}

/// Per-pixel mean squared error, `D / (N_p M)`.
pub fn mse(scenario: &Scenario, traj: &Trajectory, power: &PowerAllocation, user: usize) -> Result<f64> {
    let d = expected_distortion(scenario, traj, power, user)?;
    Ok((d.noise() + d.truncation) / scenario.total_blocks() as f64)
}

/// `10 log₁₀(η² / MSE)`; `+∞` for a perfect reconstruction.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(scenario: &Scenario, traj: &Trajectory, power: &PowerAllocation, user: usize) -> Result<f64> {
    Ok(psnr_from_mse(mse(scenario, traj, power, user)?, scenario.pixel_peak))
}

/// PSNR written directly in terms of distances,
/// `10 log₁₀(Mη² / (Σ σ₀²λ_k d_k^α / (β₀ p_k) + Σ_{m>K} λ_m))`.
pub fn psnr_direct(scenario: &Scenario, traj: &Trajectory, power: &PowerAllocation, user: usize) -> Result<f64> {
    check_inputs(scenario, traj, power, user)?;
    let ch = &scenario.channel;
    let w = &scenario.users[user].position;
    let denom: f64 = scenario
        .spectrum
        .kept_variances()
        .iter()
        .zip(&power.p)
        .enumerate()
        .map(|(k, (&l, &p))| {
            let d = (traj.q[k + 1] - w).norm();
            ch.noise_power * l * d.powf(ch.alpha) / (ch.beta0 * p.max(P_FLOOR))
        })
        .sum::<f64>()
        + scenario.spectrum.truncation();
    let num = scenario.total_blocks() as f64 * scenario.pixel_peak * scenario.pixel_peak;
    Ok(if denom <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (num / denom).log10()
    })
}

/// PSNR of every user, in user order.
pub fn psnr_all(scenario: &Scenario, traj: &Trajectory, power: &PowerAllocation) -> Result<Vec<f64>> {
    (0..scenario.users.len())
        .map(|n| psnr(scenario, traj, power, n))
        .collect()
}

/// Worst PSNR and the index of the user attaining it (lowest index on ties).
pub fn min_psnr(scenario: &Scenario, traj: &Trajectory, power: &PowerAllocation) -> Result<(f64, usize)> {
    if scenario.users.is_empty() {
        return Err(Error::Invalid("no users".into()));
    }
    let all = psnr_all(scenario, traj, power)?;
    let mut best = (f64::INFINITY, 0);
    for (n, &v) in all.iter().enumerate() {
        if v < best.0 {
            best = (v, n);
        }
    }
    Ok(best)
}
