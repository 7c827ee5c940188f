//! Scenario configuration, validation, and seeded world construction.
//!
//! A scenario is a straight bi-directional road with roadside units (RSUs)
//! along it, macro base stations (MBSs) set back from it, and a mix of
//! platooned and free vehicles. Config values use road units (meters,
//! km/h); speeds are converted to signed m/s when the world is built.

use crate::rng::{Domain, Stream};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// km/h to m/s.
pub const KMH_TO_MS: f64 = 1000.0 / 3600.0;

/// Lateral lane offset from the road axis, by driving direction.
pub const LANE_OFFSET_M: f64 = 2.0;

/// Lateral offset of RSUs from the road axis.
pub const RSU_LATERAL_M: f64 = 5.0;

/// Compile-time action-space maxima. Worlds larger than these cannot be
/// expressed in the fixed agent action enumeration and are rejected at
/// config validation.
pub const MAX_RSUS: usize = 4;
pub const MAX_MBS: usize = 2;
pub const MAX_PLATOON_MEMBERS: usize = 12;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Wireless and backhaul channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Transmission bandwidth W in Hz.
    pub bandwidth_hz: f64,
    /// Path-loss exponent alpha.
    pub pathloss_alpha: f64,
    /// AWGN power at any receiver, in watts.
    pub noise_power_w: f64,
    /// Channel power gain at 1 m reference distance (linear).
    pub ref_gain_p0: f64,
    /// Log-normal shadowing standard deviation, in dB. Zero disables
    /// shadowing.
    pub shadowing_sigma_db: f64,
    /// Vehicle transmission power, in watts.
    pub tx_power_w: f64,
    /// RSU coverage chord length L along the road, in meters.
    pub rsu_coverage_m: f64,
    /// Maximum V2V communication distance, in meters.
    pub v2v_range_m: f64,
    /// RSU-RSU / RSU-MBS fiber rate, in bits/s.
    pub fiber_rate_bps: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            bandwidth_hz: 30e6,
            pathloss_alpha: 3.0,
            // Thermal density -174 dBm/Hz over 30 MHz.
            noise_power_w: 1.1943e-13,
            // -65 dB per unit distance.
            ref_gain_p0: 3.162_277_660_168_379_5e-7,
            shadowing_sigma_db: 3.5,
            // 20 dBm.
            tx_power_w: 0.1,
            rsu_coverage_m: 400.0,
            v2v_range_m: 300.0,
            fiber_rate_bps: 1e9,
        }
    }
}

/// Compute capacities of the three node classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeParams {
    /// Vehicle CPU, cycles/s.
    pub f_vehicle_hz: f64,
    /// RSU CPU, cycles/s.
    pub f_rsu_hz: f64,
    /// MBS CPU, cycles/s.
    pub f_mbs_hz: f64,
    /// Mean of the Poisson-distributed MBS compute used by non-vehicle
    /// traffic, cycles/s.
    pub mbs_nonvehicle_mean_hz: f64,
}

impl Default for ComputeParams {
    fn default() -> Self {
        ComputeParams {
            f_vehicle_hz: 0.5e9,
            f_rsu_hz: 6e9,
            f_mbs_hz: 10e9,
            mbs_nonvehicle_mean_hz: 3e9,
        }
    }
}

/// Task shape shared by every generated task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    /// Task size lambda, in bits.
    pub size_bits: f64,
    /// Processing density rho, in cycles/bit.
    pub density_cycles_per_bit: f64,
    /// Affordable deadline D^max, in seconds.
    pub deadline_s: f64,
    /// Probability that a platoon member's task is public.
    pub public_ratio_platoon: f64,
    /// Probability that a free vehicle's task is public.
    pub public_ratio_free: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            size_bits: 1.5e6,
            density_cycles_per_bit: 100.0,
            deadline_s: 0.5,
            public_ratio_platoon: 0.30,
            public_ratio_free: 0.20,
        }
    }
}

/// Speed distribution and episode clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityParams {
    /// Truncated-Gaussian mean, km/h.
    pub speed_mean_kmh: f64,
    /// Truncated-Gaussian standard deviation, km/h.
    pub speed_std_kmh: f64,
    /// Episode length, seconds.
    pub dt_s: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            speed_mean_kmh: 60.0,
            speed_std_kmh: 5.0,
            dt_s: 0.1,
        }
    }
}

/// One platoon: how many members and the road span they initially occupy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonSpec {
    pub members: usize,
    pub span_m: f64,
}

/// Full scenario description: geometry, population, and physics parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Road length, meters.
    pub road_length_m: f64,
    /// RSU positions along the road, meters.
    pub rsu_positions_m: Vec<f64>,
    /// MBS positions as (x, y) meters; y is the set-back from the road.
    pub mbs_positions_m: Vec<(f64, f64)>,
    /// Total vehicle count (platoon members plus free vehicles).
    pub n_vehicles: usize,
    /// Platoons; members are carved out of `n_vehicles`.
    pub platoons: Vec<PlatoonSpec>,
    /// Max vehicles an RSU serves simultaneously (N).
    pub rsu_capacity: usize,
    pub channel: ChannelParams,
    pub compute: ComputeParams,
    pub task: TaskParams,
    pub mobility: MobilityParams,
    /// Decision episodes per epoch (t_max).
    pub episodes_per_epoch: usize,
    /// Master seed; all substreams derive from it.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            road_length_m: 1200.0,
            rsu_positions_m: vec![200.0, 600.0, 1000.0],
            mbs_positions_m: vec![(600.0, 500.0)],
            n_vehicles: 15,
            platoons: vec![
                PlatoonSpec {
                    members: 5,
                    span_m: 40.0,
                },
                PlatoonSpec {
                    members: 5,
                    span_m: 40.0,
                },
            ],
            rsu_capacity: 6,
            channel: ChannelParams::default(),
            compute: ComputeParams::default(),
            task: TaskParams::default(),
            mobility: MobilityParams::default(),
            episodes_per_epoch: 25,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Check every config invariant, naming the violated one on failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.road_length_m > 0.0) {
            return fail(format!("road_length_m > 0 violated ({})", self.road_length_m));
        }
        for &x in &self.rsu_positions_m {
            if !(0.0..=self.road_length_m).contains(&x) {
                return fail(format!("rsu position {x} outside [0, {}]", self.road_length_m));
            }
        }
        if self.rsu_positions_m.len() > MAX_RSUS {
            return fail(format!(
                "at most {MAX_RSUS} RSUs supported, got {}",
                self.rsu_positions_m.len()
            ));
        }
        if self.mbs_positions_m.len() > MAX_MBS {
            return fail(format!(
                "at most {MAX_MBS} MBSs supported, got {}",
                self.mbs_positions_m.len()
            ));
        }
        if self.rsu_capacity < 1 {
            return fail("rsu_capacity >= 1 violated (got 0)".into());
        }
        let platoon_total: usize = self.platoons.iter().map(|p| p.members).sum();
        if platoon_total > self.n_vehicles {
            return fail(format!(
                "sum of platoon members ({platoon_total}) exceeds n_vehicles ({})",
                self.n_vehicles
            ));
        }
        for (i, p) in self.platoons.iter().enumerate() {
            if p.members < 1 {
                return fail(format!("platoon {i} has no members"));
            }
            if p.members > MAX_PLATOON_MEMBERS {
                return fail(format!(
                    "platoon {i} has {} members, max {MAX_PLATOON_MEMBERS}",
                    p.members
                ));
            }
            if p.span_m < 0.0 {
                return fail(format!("platoon {i} span_m must be >= 0"));
            }
        }
        let ch = &self.channel;
        for (name, v) in [
            ("bandwidth_hz", ch.bandwidth_hz),
            ("noise_power_w", ch.noise_power_w),
            ("ref_gain_p0", ch.ref_gain_p0),
            ("tx_power_w", ch.tx_power_w),
            ("rsu_coverage_m", ch.rsu_coverage_m),
            ("v2v_range_m", ch.v2v_range_m),
            ("fiber_rate_bps", ch.fiber_rate_bps),
        ] {
            if !(v > 0.0) {
                return fail(format!("channel.{name} > 0 violated ({v})"));
            }
        }
        if ch.shadowing_sigma_db < 0.0 {
            return fail("channel.shadowing_sigma_db >= 0 violated".into());
        }
        if ch.pathloss_alpha < 2.0 {
            return fail(format!(
                "channel.pathloss_alpha >= 2 violated ({})",
                ch.pathloss_alpha
            ));
        }
        let co = &self.compute;
        if !(co.f_vehicle_hz > 0.0) {
            return fail("compute.f_vehicle_hz > 0 violated".into());
        }
        if !(co.f_vehicle_hz <= co.f_rsu_hz && co.f_rsu_hz <= co.f_mbs_hz) {
            return fail("compute capacities must satisfy vehicle <= rsu <= mbs".into());
        }
        if !(co.mbs_nonvehicle_mean_hz >= 0.0 && co.mbs_nonvehicle_mean_hz < co.f_mbs_hz) {
            return fail("compute.mbs_nonvehicle_mean_hz must be in [0, f_mbs_hz)".into());
        }
        let t = &self.task;
        if !(t.size_bits > 0.0 && t.density_cycles_per_bit > 0.0 && t.deadline_s > 0.0) {
            return fail("task size, density, and deadline must be > 0".into());
        }
        for (name, p) in [
            ("public_ratio_platoon", t.public_ratio_platoon),
            ("public_ratio_free", t.public_ratio_free),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("task.{name} in [0,1] violated ({p})"));
            }
        }
        let m = &self.mobility;
        if !(m.speed_std_kmh > 0.0) {
            return fail(format!(
                "mobility.speed_std_kmh > 0 violated ({})",
                m.speed_std_kmh
            ));
        }
        if !(m.speed_mean_kmh - 3.0 * m.speed_std_kmh > 0.0) {
            return fail(format!(
                "mobility mean - 3*std must stay positive ({} - 3*{})",
                m.speed_mean_kmh, m.speed_std_kmh
            ));
        }
        if !(m.dt_s > 0.0) {
            return fail("mobility.dt_s > 0 violated".into());
        }
        if self.episodes_per_epoch < 1 {
            return fail("episodes_per_epoch >= 1 violated".into());
        }
        Ok(())
    }

    /// Minimum speed after truncation, m/s.
    pub fn v_min_ms(&self) -> f64 {
        (self.mobility.speed_mean_kmh - 3.0 * self.mobility.speed_std_kmh) * KMH_TO_MS
    }

    /// Maximum speed after truncation, m/s.
    pub fn v_max_ms(&self) -> f64 {
        (self.mobility.speed_mean_kmh + 3.0 * self.mobility.speed_std_kmh) * KMH_TO_MS
    }
}

/// Whole experiment descriptor: the scenario plus environment and training
/// sections, all in one diff-able file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    pub env: crate::env::EnvParams,
    pub train: crate::madrl::TrainConfig,
}

pub const SCHEMA_VERSION: u32 = 1;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioConfig::default(),
            env: crate::env::EnvParams::default(),
            train: crate::madrl::TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        self.scenario.validate()?;
        self.env
            .validate()
            .map_err(|e| ConfigError::Invalid(e))?;
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e))?;
        Ok(())
    }
}

/// Load and validate an experiment config from a JSON file. Missing fields
/// take built-in defaults; unknown fields are rejected.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
    if cfg.schema_version == 0 {
        cfg.schema_version = SCHEMA_VERSION;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Sample from a Gaussian truncated to `[mu - 3 sigma, mu + 3 sigma]` by
/// rejection; the acceptance rate at 3 sigma is above 99.7%.
pub fn sample_truncated_gaussian(mu: f64, sigma: f64, rng: &mut Stream) -> f64 {
    debug_assert!(sigma > 0.0);
    let lo = mu - 3.0 * sigma;
    let hi = mu + 3.0 * sigma;
    loop {
        let x = rng.normal(mu, sigma);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
}

/// One vehicle's kinematic and radio state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: usize,
    /// Position along the road, meters, in [0, road_length].
    pub x: f64,
    /// Lane offset, meters (sign = direction).
    pub y: f64,
    /// Signed speed, m/s; sign is the driving direction.
    pub speed_ms: f64,
    pub platoon_id: Option<usize>,
    /// Vehicle CPU, cycles/s.
    pub f_max_hz: f64,
    /// Transmit power, watts.
    pub tx_power_w: f64,
}

impl VehicleState {
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// A platoon: ordered members (leader first) sharing speed and direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonState {
    pub id: usize,
    /// Leader first, then followers in formation order.
    pub member_ids: Vec<usize>,
    pub leader_id: usize,
    /// Common speed after synchronization, m/s signed.
    pub speed_ms: f64,
}

/// A roadside unit's geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsuState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// Coverage chord length along the road, meters.
    pub coverage_m: f64,
}

impl RsuState {
    /// Coverage chord on the road, clamped to `[0, road_length]`.
    pub fn chord(&self, road_length: f64) -> (f64, f64) {
        let lo = (self.x - self.coverage_m / 2.0).max(0.0);
        let hi = (self.x + self.coverage_m / 2.0).min(road_length);
        (lo, hi)
    }

    pub fn covers(&self, x: f64, road_length: f64) -> bool {
        let (lo, hi) = self.chord(road_length);
        (lo..=hi).contains(&x)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// A macro base station's geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbsState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

impl MbsState {
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Snapshot of every node in the scenario at one decision episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub road_length_m: f64,
    pub vehicles: Vec<VehicleState>,
    pub platoons: Vec<PlatoonState>,
    pub rsus: Vec<RsuState>,
    pub mbs: Vec<MbsState>,
}

impl WorldState {
    /// Other members of `vehicle`'s platoon, in formation order.
    pub fn platoon_fellows(&self, vehicle: usize) -> Vec<usize> {
        match self.vehicles[vehicle].platoon_id {
            Some(p) => self.platoons[p]
                .member_ids
                .iter()
                .copied()
                .filter(|&m| m != vehicle)
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Build a seeded world: platoon members are placed consecutively with the
/// configured span and a common direction; free vehicles are placed
/// uniformly in both directions; speeds come from the truncated-Gaussian
/// sampler (converted to m/s). Platoon speeds are left unsynchronized;
/// callers that need the common platoon speed apply
/// [`crate::mobility::sync_platoon_speeds`].
pub fn build_world(config: &ScenarioConfig, seed: u64) -> WorldState {
    let mut placement = Stream::new(seed, Domain::Placement);
    let mut speeds = Stream::new(seed, Domain::Mobility);
    let road = config.road_length_m;
    let mu = config.mobility.speed_mean_kmh;
    let sigma = config.mobility.speed_std_kmh;

    let mut vehicles = Vec::with_capacity(config.n_vehicles);
    let mut platoons = Vec::with_capacity(config.platoons.len());

    let sample_speed = |dir: f64, rng: &mut Stream| -> f64 {
        dir * sample_truncated_gaussian(mu, sigma, rng) * KMH_TO_MS
    };

    for (pid, spec) in config.platoons.iter().enumerate() {
        let dir = if placement.bernoulli(0.5) { 1.0 } else { -1.0 };
        let leader_x = placement.uniform(0.0, road);
        let spacing = if spec.members > 1 {
            spec.span_m / (spec.members - 1) as f64
        } else {
            0.0
        };
        let mut member_ids = Vec::with_capacity(spec.members);
        for j in 0..spec.members {
            let id = vehicles.len();
            let x = (leader_x - dir * j as f64 * spacing).rem_euclid(road);
            vehicles.push(VehicleState {
                id,
                x,
                y: LANE_OFFSET_M * dir,
                speed_ms: sample_speed(dir, &mut speeds),
                platoon_id: Some(pid),
                f_max_hz: config.compute.f_vehicle_hz,
                tx_power_w: config.channel.tx_power_w,
            });
            member_ids.push(id);
        }
        let leader_id = member_ids[0];
        platoons.push(PlatoonState {
            id: pid,
            member_ids,
            leader_id,
            speed_ms: vehicles[leader_id].speed_ms,
        });
    }

    while vehicles.len() < config.n_vehicles {
        let id = vehicles.len();
        let dir = if placement.bernoulli(0.5) { 1.0 } else { -1.0 };
        vehicles.push(VehicleState {
            id,
            x: placement.uniform(0.0, road),
            y: LANE_OFFSET_M * dir,
            speed_ms: sample_speed(dir, &mut speeds),
            platoon_id: None,
            f_max_hz: config.compute.f_vehicle_hz,
            tx_power_w: config.channel.tx_power_w,
        });
    }

    let rsus = config
        .rsu_positions_m
        .iter()
        .enumerate()
        .map(|(id, &x)| RsuState {
            id,
            x,
            y: RSU_LATERAL_M,
            coverage_m: config.channel.rsu_coverage_m,
        })
        .collect();

    let mbs = config
        .mbs_positions_m
        .iter()
        .enumerate()
        .map(|(id, &(x, y))| MbsState { id, x, y })
        .collect();

    WorldState {
        road_length_m: road,
        vehicles,
        platoons,
        rsus,
        mbs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_matches_shipped_values() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.road_length_m, 1200.0);
        assert_eq!(cfg.rsu_positions_m, vec![200.0, 600.0, 1000.0]);
        assert_eq!(cfg.n_vehicles, 15);
        assert_eq!(cfg.rsu_capacity, 6);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn zero_capacity_rejected() {
        let cfg = ScenarioConfig {
            rsu_capacity: 0,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("rsu_capacity"), "{err}");
    }

    #[test]
    fn zero_sigma_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.mobility.speed_std_kmh = 0.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("speed_std_kmh"), "{err}");
    }

    #[test]
    fn truncated_gaussian_bounds_and_mean() {
        let mut rng = Stream::new(42, Domain::Mobility);
        let n = 100_000;
        let mut sum = 0.0;
        let mut max = f64::MIN;
        let mut min = f64::MAX;
        for _ in 0..n {
            let v = sample_truncated_gaussian(60.0, 5.0, &mut rng);
            assert!((45.0..=75.0).contains(&v), "sample {v} out of [45,75]");
            sum += v;
            max = max.max(v);
            min = min.min(v);
        }
        let mean = sum / n as f64;
        assert!((mean - 60.0).abs() < 0.5, "mean {mean}");
        assert!(max <= 75.0 && min >= 45.0);
    }

    #[test]
    fn tiny_sigma_degenerates_to_mu() {
        let mut rng = Stream::new(1, Domain::Mobility);
        let v = sample_truncated_gaussian(60.0, 1e-12, &mut rng);
        assert!((v - 60.0).abs() < 1e-9);
    }

    #[test]
    fn build_world_population() {
        let cfg = ScenarioConfig::default();
        let world = build_world(&cfg, 3);
        assert_eq!(world.vehicles.len(), 15);
        let platooned = world
            .vehicles
            .iter()
            .filter(|v| v.platoon_id.is_some())
            .count();
        assert_eq!(platooned, 10);
        assert_eq!(world.platoons.len(), 2);
        for p in &world.platoons {
            assert!(p.member_ids.contains(&p.leader_id));
            let dir0 = world.vehicles[p.member_ids[0]].speed_ms.signum();
            for &m in &p.member_ids {
                assert_eq!(world.vehicles[m].speed_ms.signum(), dir0);
            }
        }
        for v in &world.vehicles {
            assert!((0.0..=1200.0).contains(&v.x));
            let speed = v.speed_ms.abs();
            assert!(speed >= cfg.v_min_ms() && speed <= cfg.v_max_ms());
        }
    }

    #[test]
    fn build_world_is_deterministic() {
        let cfg = ScenarioConfig::default();
        assert_eq!(build_world(&cfg, 9), build_world(&cfg, 9));
    }

    #[test]
    fn no_platoons_means_no_platoon_ids() {
        let cfg = ScenarioConfig {
            platoons: vec![],
            ..Default::default()
        };
        let world = build_world(&cfg, 1);
        assert!(world.vehicles.iter().all(|v| v.platoon_id.is_none()));
        assert!(world.platoons.is_empty());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            ..Default::default()
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn load_config_reads_file_and_validates() {
        let dir = std::env::temp_dir();
        let path = dir.join("vecsim_test_cfg.json");
        std::fs::write(
            &path,
            r#"{"schema_version":1,"scenario":{"n_vehicles":12,"platoons":[{"members":4,"span_m":30.0}]}}"#,
        )
        .unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.scenario.n_vehicles, 12);
        assert_eq!(cfg.scenario.road_length_m, 1200.0); // default fills in
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn load_config_rejects_bad_invariant() {
        let dir = std::env::temp_dir();
        let path = dir.join("vecsim_test_cfg_bad.json");
        std::fs::write(
            &path,
            r#"{"schema_version":1,"scenario":{"rsu_capacity":0}}"#,
        )
        .unwrap();
        let err = load_config(&path).unwrap_err().to_string();
        assert!(err.contains("rsu_capacity"), "{err}");
        std::fs::remove_file(&path).ok();
    }

    proptest! {
        #[test]
        fn truncation_always_holds(seed in 0u64..1000) {
            let mut rng = Stream::new(seed, Domain::Mobility);
            for _ in 0..100 {
                let v = sample_truncated_gaussian(60.0, 5.0, &mut rng);
                prop_assert!((45.0..=75.0).contains(&v));
            }
        }
    }
}
