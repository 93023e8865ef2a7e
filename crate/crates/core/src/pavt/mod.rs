//! Monte-Carlo pseudo-analog transmission of one GOP.
//!
//! The pipeline is 3-D DCT → block tiling and variance sort → selection of the
//! `K` strongest blocks and power scaling → whitening → one block per slot over
//! the AWGN link with the gain of the slot's UAV position → decoding →
//! de-whitening → inverse placement (dropped blocks as zeros) → inverse DCT.

pub mod blocks;
pub mod dct;
pub mod gop;
pub mod link;
pub mod whiten;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use blocks::{blockize_and_sort, select_and_scale, BlockShape, CoefficientBlock};
pub use dct::{dct3_forward, dct3_inverse};
pub use gop::Gop;
pub use link::{decode, transmit, DecodeMode};
pub use whiten::Whitener;

use crate::channel::inst_gain;
use crate::error::{Error, Result};
use crate::kinematics::{PowerAllocation, Trajectory};
use crate::quality::psnr_from_mse;
use crate::rng::{child_seed, Purpose};
use crate::scenario::{BlockSpectrum, Scenario};

/// CIF luma size and GOP length used for the default source.
pub const CIF_WIDTH: usize = 176;
pub const CIF_HEIGHT: usize = 144;
pub const GOP_FRAMES: usize = 3;

/// Reconstructions closer than this (mean squared error, pixel units²) are
/// reported as perfect.
const PERFECT_MSE: f64 = 1e-12;

/// Sorted block variances of a GOP.
pub fn spectrum_of(gop: &Gop, shape: BlockShape, kept: usize) -> Result<BlockSpectrum> {
    let blocks = blockize_and_sort(&dct3_forward(gop)?, shape)?;
    Ok(BlockSpectrum {
        variances: blocks.iter().map(|b| b.lambda).collect(),
        kept,
    })
}

/// Spectrum of the seeded synthetic CIF GOP.
pub fn default_spectrum(seed: u64, kept: usize) -> BlockSpectrum {
    let gop = Gop::synthetic(CIF_WIDTH, CIF_HEIGHT, GOP_FRAMES, seed);
    spectrum_of(&gop, BlockShape::CIF, kept).expect("CIF frames tile into CIF blocks")
}

/// A GOP prepared for repeated transmission.
pub struct Pipeline {
    pub gop: Gop,
    pub shape: BlockShape,
    pub blocks: Vec<CoefficientBlock>,
    pub whitener: Whitener,
}

#[derive(Debug, Clone)]
pub struct EndToEnd {
    pub mse: f64,
    pub psnr_db: f64,
    pub reconstructed: Gop,
}

impl Pipeline {
    pub fn new(gop: Gop, shape: BlockShape, seed: u64) -> Result<Self> {
        let blocks = blockize_and_sort(&dct3_forward(&gop)?, shape)?;
        Ok(Self {
            whitener: Whitener::new(shape.len(), seed),
            gop,
            shape,
            blocks,
        })
    }

    pub fn spectrum(&self, kept: usize) -> BlockSpectrum {
        BlockSpectrum {
            variances: self.blocks.iter().map(|b| b.lambda).collect(),
            kept,
        }
    }

    /// One transmission of the GOP to `user` with noise from `noise_seed`.
    pub fn run(
        &self,
        scenario: &Scenario,
        traj: &Trajectory,
        power: &PowerAllocation,
        user: usize,
        noise_seed: u64,
        mode: DecodeMode,
    ) -> Result<EndToEnd> {
        let kept = scenario.slots;
        if traj.slots() != kept {
            return Err(Error::Dimension(format!("{} trajectory slots for {kept} blocks", traj.slots())));
        }
        let w = scenario
            .users
            .get(user)
            .ok_or_else(|| Error::Invalid(format!("user index {user} out of range")))?
            .position;
        let (scaled, _) = select_and_scale(&self.blocks, kept, power)?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = scenario.channel.noise_power;
        let mut received = Vec::with_capacity(kept);
        for (k, b) in scaled.iter().enumerate() {
            let est = if b.scale > 0.0 {
                let h = inst_gain(&scenario.channel, &traj.q[k + 1], &w)?;
                let y = transmit(&self.whitener.whiten(&b.signal), h, noise, &mut rng);
                decode(&self.whitener.dewhiten(&y), h, b.scale, mode, b.lambda, noise)?
            } else {
                vec![0.0; b.signal.len()]
            };
            received.push((b.pos, est));
        }
        let coeffs = blocks::place_blocks(&received, self.gop.width, self.gop.height, self.gop.frames.len(), self.shape);
        let reconstructed = dct3_inverse(&coeffs)?;
        let mse = self.gop.mse(&reconstructed)?;
        let psnr_db = if mse <= PERFECT_MSE { f64::INFINITY } else { psnr_from_mse(mse, scenario.pixel_peak) };
        Ok(EndToEnd {
            mse,
            psnr_db,
            reconstructed,
        })
    }
}

/// Single end-to-end run; builds the pipeline from scratch.
pub fn end_to_end(
    gop: &Gop,
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerAllocation,
    user: usize,
    seed: u64,
    mode: DecodeMode,
) -> Result<EndToEnd> {
    Pipeline::new(gop.clone(), BlockShape::CIF, seed)?.run(scenario, traj, power, user, child_seed(seed, Purpose::Noise, 0), mode)
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalRow {
    /// 1-based user id.
    pub user: usize,
    pub mode: DecodeMode,
    pub empirical_mse: f64,
    pub analytic_mse: f64,
    pub empirical_psnr_db: f64,
    pub analytic_psnr_db: f64,
    pub trials: usize,
}

/// Averages the reconstruction MSE over `trials` independent noise draws and
/// compares it with the analytic model built from the GOP's own spectrum.
pub fn monte_carlo(
    pipeline: &Pipeline,
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerAllocation,
    user: usize,
    seed: u64,
    mode: DecodeMode,
    trials: usize,
) -> Result<EmpiricalRow> {
    if trials == 0 {
        return Err(Error::Invalid("at least one trial is required".into()));
    }
    let mses = (0..trials)
        .into_par_iter()
        .map(|t| {
            pipeline
                .run(scenario, traj, power, user, child_seed(seed, Purpose::Noise, t as u64), mode)
                .map(|r| r.mse)
        })
        .collect::<Result<Vec<_>>>()?;
    let empirical_mse = mses.iter().sum::<f64>() / trials as f64;
    let mut model = scenario.clone();
    model.spectrum = pipeline.spectrum(scenario.slots);
    let analytic_mse = crate::quality::mse(&model, traj, power, user)?;
    Ok(EmpiricalRow {
        user: user + 1,
        mode,
        empirical_mse,
        analytic_mse,
        empirical_psnr_db: psnr_from_mse(empirical_mse, scenario.pixel_peak),
        analytic_psnr_db: psnr_from_mse(analytic_mse, scenario.pixel_peak),
        trials,
    })
}

/// Writes `user,mode,empirical_psnr_db,analytic_psnr_db,trials`.
pub fn write_psnr_csv<W: std::io::Write>(rows: &[EmpiricalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user", "mode", "empirical_psnr_db", "analytic_psnr_db", "trials"])?;
    for r in rows {
        w.write_record([
            r.user.to_string(),
            r.mode.to_string(),
            r.empirical_psnr_db.to_string(),
            r.analytic_psnr_db.to_string(),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
