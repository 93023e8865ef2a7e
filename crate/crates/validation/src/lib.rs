//! Tiny instances and brute-force oracles for checking the subproblem
//! solvers, plus the acceptance suite in `tests/acceptance.rs`.

use uavcast::kinematics::{PowerAllocation, Trajectory, P_FLOOR};
use uavcast::power::{comm_budget, min_psnr_db, PsnrModel};
use uavcast::scenario::{users_at, BlockSpectrum, Scenario};
use uavcast::trajectory::{build_surrogate, slot_energy_bound, velocity_lower_bound};
use uavcast::Vec3;

/// `k` slots of `dt` seconds on the reference geometry, with a short made-up
/// spectrum so every block matters.
pub fn toy_scenario(k: usize, dt: f64, users: &[[f64; 2]]) -> Scenario {
    let spectrum = BlockSpectrum {
        variances: vec![50.0, 8.0, 2.0, 0.5, 0.1],
        kept: k,
    };
    let mut s = Scenario::table_one(users_at(users), spectrum);
    s.slots = k;
    s.slot_len = dt;
    s.v0 = s.cruise_velocity();
    s
}

/// Maximizes `f` over the box `lo..hi` (one or two dimensions) on an `n`-point
/// grid per axis, then zooms in around the best point `levels` times.
pub fn grid_max(lo: &[f64], hi: &[f64], n: usize, levels: usize, f: impl Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let d = lo.len();
    let (mut lo, mut hi) = (lo.to_vec(), hi.to_vec());
    let mut best = (f64::NEG_INFINITY, lo.clone());
    for _ in 0..=levels {
        let step: Vec<f64> = (0..d).map(|i| (hi[i] - lo[i]) / (n - 1) as f64).collect();
        let mut x = vec![0.0; d];
        for idx in 0..n.pow(d as u32) {
            let mut r = idx;
            for i in 0..d {
                x[i] = lo[i] + step[i] * (r % n) as f64;
                r /= n;
            }
            let v = f(&x);
            if v > best.0 {
                best = (v, x.clone());
            }
        }
        for i in 0..d {
            let (a, b) = (lo[i], hi[i]);
            lo[i] = (best.1[i] - 2.0 * step[i]).max(a);
            hi[i] = (best.1[i] + 2.0 * step[i]).min(b);
        }
    }
    best
}

/// Best worst-user PSNR over all power vectors, by grid search.
///
/// Every PSNR increases in every power, so an optimum uses the whole budget
/// unless all slots are capped; the last power is therefore filled from the
/// budget and only the first `K − 1` are gridded.
pub fn power_oracle(scenario: &Scenario, traj: &Trajectory, capped: bool, n: usize) -> f64 {
    let k = scenario.slots;
    assert!((2..=3).contains(&k));
    let models: Vec<PsnrModel> = (0..scenario.users.len()).map(|u| PsnrModel::new(scenario, traj, u).unwrap()).collect();
    let total = comm_budget(scenario, traj).unwrap() / (scenario.coeffs_per_block as f64 * scenario.slot_len);
    let cap = if capped { scenario.max_avg_power } else { f64::INFINITY };
    let hi = vec![total.min(cap); k - 1];
    let lo = vec![P_FLOOR; k - 1];
    let f = |x: &[f64]| {
        let rest = total - x.iter().sum::<f64>();
        if rest < P_FLOOR {
            return f64::NEG_INFINITY;
        }
        let mut p = x.to_vec();
        p.push(rest.min(cap));
        min_psnr_db(&models, &p)
    };
    grid_max(&lo, &hi, n, 5, f).0
}

/// The three-slot path whose second waypoint is `q2`: slot 1 is fixed by the
/// boundary state, the endpoint fixes `a[2]`, and `a[3]` only costs energy, so
/// it is zero.
pub fn three_slot_path(s: &Scenario, q2: [f64; 2]) -> Trajectory {
    assert_eq!(s.slots, 3);
    let dt = s.slot_len;
    let h = Vec3::new(0.0, 0.0, s.altitude);
    let flat = |v: Vec3| Vec3::new(v.x, v.y, 0.0);
    let q0 = flat(s.start);
    let q1 = q0 + s.v0 * dt + 0.5 * s.a0 * dt * dt;
    let v1 = s.v0 + s.a0 * dt;
    let q2 = Vec3::new(q2[0], q2[1], 0.0);
    let a1 = 2.0 * (q2 - q1 - v1 * dt) / (dt * dt);
    let v2 = v1 + a1 * dt;
    let q3 = flat(s.end);
    let a2 = 2.0 * (q3 - q2 - v2 * dt) / (dt * dt);
    let v3 = v2 + a2 * dt;
    Trajectory {
        q: vec![q0 + h, q1 + h, q2 + h, q3 + h],
        v: vec![s.v0, v1, v2, v3],
        a: vec![s.a0, a1, a2, Vec3::zeros()],
    }
}

/// Optimal value of the convex trajectory subproblem (one linearization at
/// `expansion`, no trust region) on a three-slot instance, by grid search over
/// the free waypoint. Slack speeds are set to their largest allowed value,
/// which is optimal because they only appear in the energy bound.
pub fn trajectory_oracle(s: &Scenario, power: &PowerAllocation, expansion: &Trajectory, n: usize) -> f64 {
    let sur = build_surrogate(s, power, expansion).unwrap();
    let e_comm = s.coeffs_per_block as f64 * s.slot_len * power.p.iter().sum::<f64>();
    let lim = &s.limits;
    let f = |x: &[f64]| {
        let t = three_slot_path(s, [x[0], x[1]]);
        let mut energy = 0.0;
        for k in 1..=3 {
            let v = t.v[k];
            let a = t.a[k];
            let lin = velocity_lower_bound(&expansion.v[k], &v);
            if v.norm_squared() > lim.v_max * lim.v_max || lin < lim.v_min * lim.v_min || a.norm_squared() > lim.a_max * lim.a_max {
                return f64::NEG_INFINITY;
            }
            energy += slot_energy_bound(&s.propulsion, s.slot_len, &v, &a, lin.sqrt());
        }
        if energy + e_comm > s.total_energy {
            return f64::NEG_INFINITY;
        }
        sur.min_psnr(&t)
    };
    let c = expansion.q[2];
    let r = 0.5 * lim.a_max * s.slot_len * s.slot_len + 1.0;
    grid_max(&[c.x - r, c.y - r], &[c.x + r, c.y + r], n, 5, f).0
}

/// Circular path of radius `r` around `(cx, cy)` at the scenario altitude,
/// one full turn over the horizon at constant speed. Samples of the continuous
/// motion, so only approximately consistent with the discrete dynamics.
pub fn circle_path(s: &Scenario, cx: f64, cy: f64, r: f64) -> Trajectory {
    let k = s.slots;
    let omega = 2.0 * std::f64::consts::PI / (k as f64 * s.slot_len);
    let at = |i: usize| {
        let th = omega * i as f64 * s.slot_len;
        (
            Vec3::new(cx + r * th.cos(), cy + r * th.sin(), s.altitude),
            Vec3::new(-r * omega * th.sin(), r * omega * th.cos(), 0.0),
            Vec3::new(-r * omega * omega * th.cos(), -r * omega * omega * th.sin(), 0.0),
        )
    };
    let (mut q, mut v, mut a) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..=k {
        let (qi, vi, ai) = at(i);
        q.push(qi);
        v.push(vi);
        a.push(ai);
    }
    Trajectory { q, v, a }
}

#[cfg(test)]
mod tests {
    use super::*;
    use uavcast::kinematics::flight_energy;
    use uavcast::scenario::BlockSpectrum;
    use uavcast::power::{solve_power, PowerSettings};
    use uavcast::trajectory::{solve_trajectory, TrajectorySettings};

    const USERS: [[f64; 2]; 2] = [[60.0, 80.0], [330.0, 170.0]];

    fn power_case(k: usize, capped: bool, budget_share: Option<f64>, n: usize) {
        let mut s = toy_scenario(k, 6.0, &USERS);
        let (traj, start) = s.initial_solution();
        if let Some(share) = budget_share {
            // leave only part of the communication energy after flight
            let e_f = flight_energy(&s.propulsion, &traj, s.slot_len).unwrap();
            s.total_energy = e_f + share * s.max_comm_energy();
        }
        let start = PowerAllocation { p: start.p.iter().map(|p| p * 0.1).collect() };
        let settings = PowerSettings {
            per_slot_cap: capped,
            ..Default::default()
        };
        let sol = solve_power(&s, &traj, &start, &settings).unwrap();
        let oracle = power_oracle(&s, &traj, capped, n);
        assert!(sol.report.is_optimal());
        assert!(sol.report.kkt_residual <= 1e-6, "kkt {}", sol.report.kkt_residual);
        assert!((sol.mu_db - oracle).abs() <= 1e-3, "K={k} capped={capped}: solver {} vs grid {oracle}", sol.mu_db);
    }

    #[test]
    fn power_two_slots_uncapped() {
        power_case(2, false, None, 10_001);
    }

    #[test]
    fn power_two_slots_capped_budget_bound() {
        power_case(2, true, Some(0.6), 10_001);
    }

    #[test]
    fn power_three_slots() {
        power_case(3, false, None, 401);
        power_case(3, true, Some(0.7), 401);
    }

    #[test]
    fn trajectory_three_slots_matches_grid() {
        for (e_t, users) in [(20_000.0, USERS), (3_000.0, USERS), (3_000.0, [[150.0, 150.0], [200.0, 20.0]])] {
            let mut s = toy_scenario(3, 6.0, &users);
            s.total_energy = e_t;
            let (expansion, power) = s.initial_solution();
            let settings = TrajectorySettings {
                trust_region: None,
                inner_sca_iters: 1,
                ..Default::default()
            };
            let sol = solve_trajectory(&s, &power, &expansion, &settings).unwrap();
            let oracle = trajectory_oracle(&s, &power, &expansion, 201);
            assert!(sol.report.is_optimal());
            assert!(sol.report.kkt_residual <= 1e-6, "kkt {}", sol.report.kkt_residual);
            assert!(
                (sol.surrogate_mu_db - oracle).abs() <= 1e-3,
                "E_t={e_t}: solver {} vs grid {oracle}",
                sol.surrogate_mu_db
            );
            // the solver's path is the one the oracle would build from its waypoint
            let rebuilt = three_slot_path(&s, [sol.traj.q[2].x, sol.traj.q[2].y]);
            assert!((rebuilt.q[3] - sol.traj.q[3]).norm() <= 1e-6);
        }
    }

    #[test]
    fn single_user_powers_follow_the_square_root_law() {
        let variances: Vec<f64> = (0..40).map(|i| 100.0 * 0.85f64.powi(i)).collect();
        let mut s = Scenario::table_one(users_at(&[[150.0, 150.0]]), BlockSpectrum { variances, kept: 30 });
        s.slots = 30;
        s.slot_len = 0.6;
        s.total_energy = 10_000.0;
        let traj = circle_path(&s, 150.0, 150.0, 60.0);
        let settings = PowerSettings {
            per_slot_cap: false,
            ..Default::default()
        };
        let start = PowerAllocation::uniform(30, 1e-3);
        let sol = solve_power(&s, &traj, &start, &settings).unwrap();
        let ratios: Vec<f64> = sol.power.p.iter().zip(s.spectrum.kept_variances()).map(|(p, l)| p / l.sqrt()).collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        for r in &ratios {
            assert!((r - mean).abs() <= 0.01 * mean, "{r} vs {mean}");
        }
    }
}
