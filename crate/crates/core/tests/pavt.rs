//! End-to-end transmission against the analytic distortion model.

use uavcast::kinematics::PowerAllocation;
use uavcast::pavt::{monte_carlo, BlockShape, DecodeMode, Gop, Pipeline, CIF_HEIGHT, CIF_WIDTH, GOP_FRAMES};
use uavcast::scenario::{users_at, Scenario};

fn setup(kept: usize) -> (Pipeline, Scenario) {
    let gop = Gop::synthetic(CIF_WIDTH, CIF_HEIGHT, GOP_FRAMES, 5);
    let p = Pipeline::new(gop, BlockShape::CIF, 5).unwrap();
    let mut s = Scenario::table_one(users_at(&[[60.0, 40.0], [250.0, 260.0]]), p.spectrum(kept));
    s.slots = kept;
    s.slot_len = 18.0 / kept as f64;
    s.v0 = s.cruise_velocity();
    (p, s)
}

#[test]
fn zero_forcing_matches_the_model() {
    let (p, s) = setup(96);
    let (traj, power) = s.initial_solution();
    for user in 0..2 {
        let row = monte_carlo(&p, &s, &traj, &power, user, 3, DecodeMode::ZeroForcing, 60).unwrap();
        let rel = (row.empirical_mse - row.analytic_mse).abs() / row.analytic_mse;
        assert!(rel <= 0.03, "user {user}: {} vs {} ({rel})", row.empirical_mse, row.analytic_mse);
    }
}

#[test]
fn llse_is_no_worse_than_zero_forcing() {
    let (p, s) = setup(96);
    let (traj, power) = s.initial_solution();
    let zf = monte_carlo(&p, &s, &traj, &power, 0, 4, DecodeMode::ZeroForcing, 20).unwrap();
    let ll = monte_carlo(&p, &s, &traj, &power, 0, 4, DecodeMode::Llse, 20).unwrap();
    assert!(ll.empirical_mse <= zf.empirical_mse);
}

#[test]
fn doubling_the_noise_doubles_the_channel_distortion() {
    let (p, mut s) = setup(96);
    let (traj, _) = s.initial_solution();
    // powers ∝ √λ, as a power step would choose
    let lambda = s.spectrum.kept_variances();
    let norm: f64 = lambda.iter().map(|l| l.sqrt()).sum();
    let power = PowerAllocation {
        p: lambda.iter().map(|l| s.max_avg_power * s.slots as f64 * l.sqrt() / norm).collect(),
    };
    // what remains without channel noise: the dropped blocks
    let mut quiet = s.clone();
    quiet.channel.noise_power = 0.0;
    let truncation = uavcast::quality::mse(&quiet, &traj, &power, 1).unwrap();
    let base = monte_carlo(&p, &s, &traj, &power, 1, 8, DecodeMode::ZeroForcing, 60).unwrap();
    s.channel.noise_power *= 2.0;
    let double = monte_carlo(&p, &s, &traj, &power, 1, 8, DecodeMode::ZeroForcing, 60).unwrap();
    let ratio_analytic = (double.analytic_mse - truncation) / (base.analytic_mse - truncation);
    assert!((ratio_analytic - 2.0).abs() <= 1e-9, "{ratio_analytic}");
    let ratio = (double.empirical_mse - truncation) / (base.empirical_mse - truncation);
    assert!((ratio - 2.0).abs() <= 0.1, "{ratio}");
}
