//! Problem instance: users, flight geometry, limits, budgets and the block
//! variance spectrum.
//!
//! Scenario files are TOML with the unit in every key name. Powers and gains
//! are given in dBm/dB there and converted to watts/linear on load.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm, ChannelParams};
use crate::error::{Error, Issue, Result};
use crate::kinematics::{PowerAllocation, PropulsionParams, Trajectory};
use crate::rng::{self, Purpose};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundUser {
    /// 1-based identifier, equal to the user's position in the list plus one.
    pub id: usize,
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
}

impl KinematicLimits {
    pub fn table_one() -> Self {
        Self {
            v_min: 3.0,
            v_max: 100.0,
            a_max: 10.0,
        }
    }
}

/// Variances of the DCT coefficient blocks in nonincreasing order, of which
/// the first `kept` are transmitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpectrum {
    pub variances: Vec<f64>,
    pub kept: usize,
}

impl BlockSpectrum {
    pub fn total_blocks(&self) -> usize {
        self.variances.len()
    }

    /// Variances of the transmitted blocks.
    pub fn kept_variances(&self) -> &[f64] {
        &self.variances[..self.kept]
    }

    /// `Σ_{m>K} λ_m`, the truncation loss per coefficient.
    pub fn truncation(&self) -> f64 {
        self.variances[self.kept..].iter().sum()
    }

    pub fn check(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        if self.kept > self.variances.len() {
            out.push(Issue::new(
                "spectrum.kept",
                format!("{} exceeds the {} available blocks", self.kept, self.variances.len()),
            ));
        }
        if let Some(v) = self.variances.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            out.push(Issue::new("spectrum.variances", format!("negative or non-finite variance {v}")));
        }
        if let Some(i) = self.variances.windows(2).position(|w| w[1] > w[0]) {
            out.push(Issue::new(
                "spectrum.variances",
                format!(
                    "must be nonincreasing, but entry {} ({}) exceeds entry {} ({})",
                    i + 1,
                    self.variances[i + 1],
                    i,
                    self.variances[i]
                ),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub users: Vec<GroundUser>,
    pub start: Vec3,
    pub end: Vec3,
    pub altitude: f64,
    pub slots: usize,
    /// Slot length Δ, seconds.
    pub slot_len: f64,
    pub limits: KinematicLimits,
    pub propulsion: PropulsionParams,
    pub channel: ChannelParams,
    pub spectrum: BlockSpectrum,
    /// Total energy budget E_t, joules.
    pub total_energy: f64,
    /// Maximum average transmit power P̄_max, watts.
    pub max_avg_power: f64,
    pub coeffs_per_block: usize,
    pub pixel_peak: f64,
    pub v0: Vec3,
    pub a0: Vec3,
}

impl Scenario {
    /// The reference parameter set: 180 slots of 0.1 s flying from
    /// (0, 300) to (300, 0) at 100 m, 3 kJ budget, 10 dBm average power.
    pub fn table_one(users: Vec<GroundUser>, spectrum: BlockSpectrum) -> Self {
        let start = Vec3::new(0.0, 300.0, 100.0);
        let end = Vec3::new(300.0, 0.0, 100.0);
        let slots = 180;
        let slot_len = 0.1;
        Self {
            users,
            start,
            end,
            altitude: 100.0,
            slots,
            slot_len,
            limits: KinematicLimits::table_one(),
            propulsion: PropulsionParams::table_one(),
            channel: ChannelParams::table_one(),
            spectrum,
            total_energy: 3000.0,
            max_avg_power: dbm_to_watts(10.0),
            coeffs_per_block: 396,
            pixel_peak: 255.0,
            v0: (end - start) / (slots as f64 * slot_len),
            a0: Vec3::zeros(),
        }
    }

    /// Velocity of the constant-speed straight flight from start to end.
    pub fn cruise_velocity(&self) -> Vec3 {
        (self.end - self.start) / (self.slots as f64 * self.slot_len)
    }

    /// Communication energy at full power in every slot, `K N_p Δ P̄_max`.
    pub fn max_comm_energy(&self) -> f64 {
        self.slots as f64 * self.coeffs_per_block as f64 * self.slot_len * self.max_avg_power
    }

    /// Number of DCT blocks `M`.
    pub fn total_blocks(&self) -> usize {
        self.spectrum.total_blocks()
    }

    /// Returns every violated invariant as a field-level issue.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let mut bad = |field: &str, msg: String| out.push(Issue::new(field, msg));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.users.is_empty() {
            bad("users_m", "at least one user is required".into());
        }
        for (i, u) in self.users.iter().enumerate() {
            if u.position.z != 0.0 {
                bad("users_m", format!("user {} has nonzero height {}", u.id, u.position.z));
            }
            if u.id != i + 1 {
                bad("users_m", format!("user at position {i} has id {}", u.id));
            }
        }
        if self.slots < 1 {
            bad("slots", "must be at least 1".into());
        }
        if !positive(self.slot_len) {
            bad("slot_len_s", format!("must be positive, got {}", self.slot_len));
        }
        if !positive(self.altitude) {
            bad("altitude_m", format!("must be positive, got {}", self.altitude));
        }
        if self.start.z != self.altitude {
            bad("start_m", format!("height {} differs from altitude {}", self.start.z, self.altitude));
        }
        if self.end.z != self.altitude {
            bad("end_m", format!("height {} differs from altitude {}", self.end.z, self.altitude));
        }
        if !positive(self.total_energy) {
            bad("total_energy_j", format!("must be positive, got {}", self.total_energy));
        }
        if !positive(self.max_avg_power) {
            bad("max_avg_power_dbm", format!("must be positive, got {} W", self.max_avg_power));
        }
        if !positive(self.pixel_peak) {
            bad("pixel_peak", format!("must be positive, got {}", self.pixel_peak));
        }
        if self.coeffs_per_block == 0 {
            bad("coeffs_per_block", "must be at least 1".into());
        }
        let l = &self.limits;
        if !(l.v_min > 0.0 && l.v_min < l.v_max && l.v_max.is_finite()) {
            bad(
                "limits",
                format!("need 0 < v_min < v_max, got v_min = {}, v_max = {}", l.v_min, l.v_max),
            );
        }
        if !positive(l.a_max) {
            bad("limits.a_max_mps2", format!("must be positive, got {}", l.a_max));
        }
        for i in self.propulsion.check() {
            out.push(i);
        }
        out.extend(self.channel.check());
        out.extend(self.spectrum.check());
        if self.spectrum.kept != self.slots {
            out.push(Issue::new(
                "spectrum.kept",
                format!("{} transmitted blocks but {} slots", self.spectrum.kept, self.slots),
            ));
        }
        if self.slots >= 1 && self.slot_len > 0.0 && out.is_empty() {
            let cruise = self.cruise_velocity();
            let speed = cruise.norm();
            if speed < l.v_min || speed > l.v_max {
                out.push(Issue::new(
                    "slots",
                    format!(
                        "straight flight needs {speed:.4} m/s, outside [{}, {}]",
                        l.v_min, l.v_max
                    ),
                ));
            }
            let tol = 1e-9 * speed.max(1.0);
            if (self.v0 - cruise).norm() > tol || self.a0.norm() > tol {
                out.push(Issue::new(
                    "v0_mps",
                    format!(
                        "boundary velocity/acceleration must match the straight flight ({:?}, 0)",
                        cruise.as_slice()
                    ),
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }

    /// Straight constant-speed flight with every slot at full power.
    pub fn initial_solution(&self) -> (Trajectory, PowerAllocation) {
        let k = self.slots;
        let vel = self.cruise_velocity();
        let d = self.end - self.start;
        let traj = Trajectory {
            q: (0..=k).map(|i| self.start + d * (i as f64 / k as f64)).collect(),
            v: vec![vel; k + 1],
            a: vec![Vec3::zeros(); k + 1],
        };
        (traj, PowerAllocation::uniform(k, self.max_avg_power))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::TomlParse(p) => Error::Config(format!("{}: {p}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        Ok(file.into_scenario())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&ScenarioFile::from_scenario(self))?)
    }
}

/// Uniformly placed users on the ground, reproducible per seed. Users drawn
/// with a larger `n` extend the list drawn with a smaller one.
pub fn generate_users(
    seed: u64,
    n: usize,
    x_range: (f64, f64),
    y_range: (f64, f64),
) -> Result<Vec<GroundUser>> {
    if n == 0 {
        return Err(Error::Invalid("at least one user is required".into()));
    }
    for (name, (lo, hi)) in [("x", x_range), ("y", y_range)] {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Invalid(format!("empty {name} range [{lo}, {hi}]")));
        }
    }
    let mut r = rng::stream(seed, Purpose::Users);
    Ok((0..n)
        .map(|i| {
            let x = r.random_range(x_range.0..x_range.1);
            let y = r.random_range(y_range.0..y_range.1);
            GroundUser {
                id: i + 1,
                position: Vec3::new(x, y, 0.0),
            }
        })
        .collect())
}

/// Users at fixed ground coordinates, numbered from 1.
pub fn users_at(points: &[[f64; 2]]) -> Vec<GroundUser> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| GroundUser {
            id: i + 1,
            position: Vec3::new(p[0], p[1], 0.0),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsFile {
    v_min_mps: f64,
    v_max_mps: f64,
    a_max_mps2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropulsionFile {
    c1: f64,
    c2: f64,
    g0_mps2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    beta0_db: f64,
    path_loss_exponent: f64,
    noise_power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kept: Option<usize>,
    variances: Vec<f64>,
}

/// On-disk layout. Tables other than the scenario's own (optimizer and
/// simulation settings) are ignored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScenarioFile {
    altitude_m: f64,
    slots: usize,
    slot_len_s: f64,
    start_m: [f64; 3],
    end_m: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v0_mps: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a0_mps2: Option<[f64; 3]>,
    total_energy_j: f64,
    max_avg_power_dbm: f64,
    coeffs_per_block: usize,
    pixel_peak: f64,
    users_m: Vec<[f64; 2]>,
    limits: LimitsFile,
    propulsion: PropulsionFile,
    channel: ChannelFile,
    spectrum: SpectrumFile,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl ScenarioFile {
    fn into_scenario(self) -> Scenario {
        let start = Vec3::from(self.start_m);
        let end = Vec3::from(self.end_m);
        let cruise = (end - start) / (self.slots as f64 * self.slot_len_s);
        Scenario {
            users: users_at(&self.users_m),
            start,
            end,
            altitude: self.altitude_m,
            slots: self.slots,
            slot_len: self.slot_len_s,
            limits: KinematicLimits {
                v_min: self.limits.v_min_mps,
                v_max: self.limits.v_max_mps,
                a_max: self.limits.a_max_mps2,
            },
            propulsion: PropulsionParams {
                c1: self.propulsion.c1,
                c2: self.propulsion.c2,
                g0: self.propulsion.g0_mps2,
            },
            channel: ChannelParams {
                beta0: db_to_linear(self.channel.beta0_db),
                alpha: self.channel.path_loss_exponent,
                noise_power: dbm_to_watts(self.channel.noise_power_dbm),
            },
            spectrum: BlockSpectrum {
                kept: self.spectrum.kept.unwrap_or(self.slots),
                variances: self.spectrum.variances,
            },
            total_energy: self.total_energy_j,
            max_avg_power: dbm_to_watts(self.max_avg_power_dbm),
            coeffs_per_block: self.coeffs_per_block,
            pixel_peak: self.pixel_peak,
            v0: self.v0_mps.map(Vec3::from).unwrap_or(cruise),
            a0: self.a0_mps2.map(Vec3::from).unwrap_or_else(Vec3::zeros),
        }
    }

    fn from_scenario(s: &Scenario) -> Self {
        let cruise = s.cruise_velocity();
        Self {
            altitude_m: s.altitude,
            slots: s.slots,
            slot_len_s: s.slot_len,
            start_m: arr(&s.start),
            end_m: arr(&s.end),
            v0_mps: (s.v0 != cruise).then(|| arr(&s.v0)),
            a0_mps2: (s.a0 != Vec3::zeros()).then(|| arr(&s.a0)),
            total_energy_j: s.total_energy,
            max_avg_power_dbm: round_trip(s.max_avg_power, watts_to_dbm, dbm_to_watts),
            coeffs_per_block: s.coeffs_per_block,
            pixel_peak: s.pixel_peak,
            users_m: s.users.iter().map(|u| [u.position.x, u.position.y]).collect(),
            limits: LimitsFile {
                v_min_mps: s.limits.v_min,
                v_max_mps: s.limits.v_max,
                a_max_mps2: s.limits.a_max,
            },
            propulsion: PropulsionFile {
                c1: s.propulsion.c1,
                c2: s.propulsion.c2,
                g0_mps2: s.propulsion.g0,
            },
            channel: ChannelFile {
                beta0_db: round_trip(s.channel.beta0, linear_to_db, db_to_linear),
                path_loss_exponent: s.channel.alpha,
                noise_power_dbm: round_trip(s.channel.noise_power, watts_to_dbm, dbm_to_watts),
            },
            spectrum: SpectrumFile {
                kept: (s.spectrum.kept != s.slots).then_some(s.spectrum.kept),
                variances: s.spectrum.variances.clone(),
            },
        }
    }
}

/// Converts to log units, snapping to a nearby round value when that value
/// converts back to exactly the same linear number.
fn round_trip(x: f64, to: fn(f64) -> f64, back: fn(f64) -> f64) -> f64 {
    let y = to(x);
    for digits in 0..12 {
        let scale = 10f64.powi(digits);
        let r = (y * scale).round() / scale;
        if back(r) == x {
            return r;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spectrum(k: usize) -> BlockSpectrum {
        BlockSpectrum {
            variances: (0..k + 12).map(|i| 1000.0 / (1.0 + i as f64)).collect(),
            kept: k,
        }
    }

    fn table() -> Scenario {
        Scenario::table_one(users_at(&[[100.0, 100.0], [250.0, 50.0]]), spectrum(180))
    }

    #[test]
    fn table_one_is_valid() {
        let s = table();
        s.validate().unwrap();
        assert_relative_eq!(s.cruise_velocity().norm(), 23.57, epsilon = 5e-3);
    }

    #[test]
    fn degenerate_speed_bounds_rejected() {
        let mut s = table();
        s.limits.v_min = s.limits.v_max;
        let issues = s.issues();
        assert!(issues.iter().any(|i| i.field == "limits"), "{issues:?}");
    }

    #[test]
    fn unsorted_spectrum_rejected() {
        let b = BlockSpectrum {
            variances: vec![1.0, 2.0],
            kept: 1,
        };
        assert_eq!(b.check().len(), 1);
    }

    #[test]
    fn unreachable_endpoint_rejected() {
        let mut s = table();
        s.end = Vec3::new(3000.0, 0.0, 100.0);
        s.v0 = s.cruise_velocity();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("straight flight"), "{err}");
    }

    #[test]
    fn users_are_seeded_and_nested() {
        let a = generate_users(7, 4, (0.0, 1200.0), (0.0, 1200.0)).unwrap();
        let b = generate_users(7, 4, (0.0, 1200.0), (0.0, 1200.0)).unwrap();
        let c = generate_users(7, 10, (0.0, 1200.0), (0.0, 1200.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[..], c[..4]);
        for u in &a {
            assert!((0.0..1200.0).contains(&u.position.x) && (0.0..1200.0).contains(&u.position.y));
            assert_eq!(u.position.z, 0.0);
        }
        assert!(generate_users(7, 0, (0.0, 1.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn initial_solution_is_straight_line() {
        let s = table();
        let (t, p) = s.initial_solution();
        assert_relative_eq!((t.q[90] - Vec3::new(150.0, 150.0, 100.0)).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(t.v[7].x, 16.6667, epsilon = 1e-4);
        assert_relative_eq!(t.v[7].y, -16.6667, epsilon = 1e-4);
        assert_eq!(t.q[180], s.end);
        let e_c = crate::kinematics::comm_energy(s.coeffs_per_block, s.slot_len, &p);
        assert_relative_eq!(e_c, 71.28, max_relative = 1e-12);
        assert_relative_eq!(s.max_comm_energy(), 71.28, max_relative = 1e-12);
    }

    #[test]
    fn toml_round_trip() {
        let s = table();
        let text = s.to_toml().unwrap();
        assert!(text.contains("max_avg_power_dbm = 10.0"), "{text}");
        assert!(text.contains("noise_power_dbm = -109.0"), "{text}");
        let back = Scenario::from_toml(&text).unwrap();
        assert_eq!(back, s);
    }
}
