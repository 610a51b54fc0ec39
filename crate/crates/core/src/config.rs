//! Run configuration: a strict TOML schema covering grids, kernel,
//! optimizer, channel scenario, filter, and mission settings, plus three
//! bundled scenario presets.
//!
//! Unknown keys are rejected at parse time; every sub-module invariant is
//! checked at validation time with the offending field named in the error.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelModel, ModelKind};
use crate::geo::{GeoGrid, GeoPoint, LocalFrame};
use crate::gp::FitOptions;
use crate::kernel::{HyperBounds, HyperParams};
use crate::mission::{MissionConfig, MissionEnv};
use crate::optimize::OptOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Bundled scenarios mirroring the three campaign trials: a close
/// transmitter under a saturation plateau, a distant one under moderate
/// noise, and a mid-distance one under heavy fading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Transmitter 125 m from takeoff; mild noise, low saturation ceiling.
    Near,
    /// Transmitter 330 m from takeoff; moderate shadowing and fading.
    Far,
    /// Transmitter 286 m from takeoff; heavy fading stressing the filter.
    Noisy,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Near, Preset::Far, Preset::Noisy];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Near => "near",
            Preset::Far => "far",
            Preset::Noisy => "noisy",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "near" => Ok(Preset::Near),
            "far" => Ok(Preset::Far),
            "noisy" => Ok(Preset::Noisy),
            other => Err(format!(
                "unknown preset `{other}` (expected near, far, or noisy)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
    #[serde(default = "default_grid_res")]
    pub rows: usize,
    #[serde(default = "default_grid_res")]
    pub cols: usize,
}

fn default_grid_res() -> usize {
    64
}

impl GridConfig {
    fn to_grid(self, field: &'static str) -> Result<GeoGrid, ConfigError> {
        GeoGrid::new(
            GeoPoint::new(self.min_lat, self.min_lon),
            GeoPoint::new(self.max_lat, self.max_lon),
            self.rows,
            self.cols,
        )
        .map_err(|e| invalid(field, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_scale_bounds")]
    pub scale_bounds: (f64, f64),
    #[serde(default = "default_lengthscale_bounds")]
    pub lengthscale_bounds: (f64, f64),
    #[serde(default = "default_noise_bounds")]
    pub noise_bounds: (f64, f64),
    /// GP mean constant g: default channel gain with no signal, dB.
    #[serde(default = "default_mean_gain")]
    pub mean_gain_db: f64,
}

fn default_scale() -> f64 {
    1.0
}
fn default_lengthscale() -> f64 {
    0.00276
}
fn default_noise() -> f64 {
    0.33
}
fn default_scale_bounds() -> (f64, f64) {
    (1e-3, 1e3)
}
fn default_lengthscale_bounds() -> (f64, f64) {
    (0.001, 0.004)
}
fn default_noise_bounds() -> (f64, f64) {
    (1e-4, 1e2)
}
fn default_mean_gain() -> f64 {
    -85.0
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            scale: default_scale(),
            lengthscale: default_lengthscale(),
            noise: default_noise(),
            scale_bounds: default_scale_bounds(),
            lengthscale_bounds: default_lengthscale_bounds(),
            noise_bounds: default_noise_bounds(),
            mean_gain_db: default_mean_gain(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_memory")]
    pub memory: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Random restarts per refit, in addition to the warm start.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_memory() -> usize {
    10
}
fn default_grad_tol() -> f64 {
    1e-5
}
fn default_step_tol() -> f64 {
    1e-9
}
fn default_max_iters() -> usize {
    200
}
fn default_restarts() -> usize {
    2
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            memory: default_memory(),
            grad_tol: default_grad_tol(),
            step_tol: default_step_tol(),
            max_iters: default_max_iters(),
            restarts: default_restarts(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// UCB exploration decay base d in beta = d^s.
    #[serde(default = "default_ucb_decay")]
    pub ucb_decay: f64,
}

fn default_ucb_decay() -> f64 {
    0.95
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            ucb_decay: default_ucb_decay(),
        }
    }
}

/// How campaigns place the transmitter per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxPlacement {
    /// Always at (`tx_lat`, `tx_lon`).
    Fixed,
    /// Redrawn uniformly over the rover boundary per run.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub model: ModelKind,
    pub tx_lat: f64,
    pub tx_lon: f64,
    #[serde(default = "default_tx_power")]
    pub tx_power_db: f64,
    #[serde(default = "default_pathloss_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_sigma_spread")]
    pub sigma_spread_deg: f64,
    #[serde(default)]
    pub shadowing_std_db: f64,
    #[serde(default = "default_mean_gain")]
    pub noise_floor_db: f64,
    #[serde(default = "default_saturation")]
    pub saturation_db: f64,
    #[serde(default)]
    pub fade_prob: f64,
    #[serde(default = "default_fade_depth")]
    pub fade_depth_db: f64,
    #[serde(default = "default_placement")]
    pub placement: TxPlacement,
}

fn default_tx_power() -> f64 {
    -20.0
}
fn default_pathloss_exponent() -> f64 {
    2.0
}
fn default_sigma_spread() -> f64 {
    0.002
}
fn default_saturation() -> f64 {
    -40.0
}
fn default_fade_depth() -> f64 {
    30.0
}
fn default_placement() -> TxPlacement {
    TxPlacement::Fixed
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_threshold")]
    pub initial_threshold: f64,
    #[serde(default = "default_escalation")]
    pub escalation_factor: f64,
    #[serde(default = "default_retake_budget")]
    pub retake_budget: u32,
}

fn default_threshold() -> f64 {
    35.0
}
fn default_escalation() -> f64 {
    2.0
}
fn default_retake_budget() -> u32 {
    10
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            initial_threshold: default_threshold(),
            escalation_factor: default_escalation(),
            retake_budget: default_retake_budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSection {
    pub takeoff_lat: f64,
    pub takeoff_lon: f64,
    #[serde(default = "default_altitude")]
    pub altitude_m: f64,
    #[serde(default = "default_climb_rate")]
    pub climb_rate_mps: f64,
    #[serde(default = "default_cruise_speed")]
    pub cruise_speed_mps: f64,
    #[serde(default = "default_sample_duration")]
    pub sample_duration_s: f64,
    #[serde(default = "default_mission_duration")]
    pub mission_duration_s: f64,
    #[serde(default = "default_estimate_times")]
    pub estimate_times_s: Vec<f64>,
    /// Three predefined waypoints sampled before the autonomous loop.
    pub startup_waypoints: Vec<[f64; 2]>,
    #[serde(default = "default_bins_per_sample")]
    pub bins_per_sample: usize,
    #[serde(default = "default_similar_radius")]
    pub similar_point_radius_m: f64,
    #[serde(default = "default_similar_count")]
    pub similar_point_count: usize,
    #[serde(default = "default_max_rejects")]
    pub max_rejects: u32,
    #[serde(default = "default_aux_radius")]
    pub aux_circle_radius_m: f64,
    #[serde(default = "default_aux_points")]
    pub aux_circle_points: usize,
}

fn default_altitude() -> f64 {
    40.0
}
fn default_climb_rate() -> f64 {
    1.0
}
fn default_cruise_speed() -> f64 {
    10.0
}
fn default_sample_duration() -> f64 {
    6.0
}
fn default_mission_duration() -> f64 {
    600.0
}
fn default_estimate_times() -> Vec<f64> {
    vec![180.0, 600.0]
}
fn default_bins_per_sample() -> usize {
    60
}
fn default_similar_radius() -> f64 {
    20.0
}
fn default_similar_count() -> usize {
    5
}
fn default_max_rejects() -> u32 {
    8
}
fn default_aux_radius() -> f64 {
    60.0
}
fn default_aux_points() -> usize {
    8
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub flight_grid: GridConfig,
    pub rover_grid: GridConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    pub mission: MissionSection,
}

impl RunConfig {
    /// Parses and validates a TOML config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Parses and validates config text.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Runs every sub-module invariant check, naming the failing field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.to_env().map(|_| ())
    }

    /// Transmitter placement mode for campaigns.
    pub fn placement(&self) -> TxPlacement {
        self.channel.placement
    }

    /// Assembles the validated mission environment.
    pub fn to_env(&self) -> Result<MissionEnv, ConfigError> {
        let flight_grid = self.flight_grid.to_grid("flight_grid")?;
        let rover_grid = self.rover_grid.to_grid("rover_grid")?;

        let kernel_init = HyperParams::new(
            self.kernel.scale,
            self.kernel.lengthscale,
            self.kernel.noise,
        );
        kernel_init
            .validate()
            .map_err(|e| invalid("kernel", e.to_string()))?;
        let kernel_bounds = HyperBounds {
            scale: self.kernel.scale_bounds,
            lengthscale: self.kernel.lengthscale_bounds,
            noise: self.kernel.noise_bounds,
        };
        kernel_bounds.validate().map_err(|e| {
            let field = match e {
                crate::kernel::KernelError::BadBounds { name: "scale", .. } => {
                    "kernel.scale_bounds"
                }
                crate::kernel::KernelError::BadBounds {
                    name: "lengthscale",
                    ..
                } => "kernel.lengthscale_bounds",
                _ => "kernel.noise_bounds",
            };
            invalid(field, e.to_string())
        })?;
        if !kernel_bounds.contains(&kernel_bounds.clamp(&kernel_init)) {
            return Err(invalid("kernel", "initial values cannot be clamped into bounds"));
        }

        if self.optimizer.memory == 0 {
            return Err(invalid("optimizer.memory", "must be at least 1"));
        }
        if self.optimizer.grad_tol <= 0.0 || self.optimizer.step_tol <= 0.0 {
            return Err(invalid(
                "optimizer.grad_tol",
                "tolerances must be positive",
            ));
        }
        if self.optimizer.max_iters == 0 {
            return Err(invalid("optimizer.max_iters", "must be at least 1"));
        }

        if !(self.acquisition.ucb_decay > 0.0 && self.acquisition.ucb_decay < 1.0) {
            return Err(invalid(
                "acquisition.ucb_decay",
                format!("{} is not in (0, 1)", self.acquisition.ucb_decay),
            ));
        }

        let channel = ChannelModel {
            tx_location: GeoPoint::new(self.channel.tx_lat, self.channel.tx_lon),
            kind: self.channel.model,
            tx_power_db: self.channel.tx_power_db,
            pathloss_exponent: self.channel.pathloss_exponent,
            sigma_spread_deg: self.channel.sigma_spread_deg,
            shadowing_std_db: self.channel.shadowing_std_db,
            noise_floor_db: self.channel.noise_floor_db,
            saturation_db: self.channel.saturation_db,
            fade_prob: self.channel.fade_prob,
            fade_depth_db: self.channel.fade_depth_db,
            rng_seed: self.seed,
        };
        channel
            .validate()
            .map_err(|e| invalid("channel", e.to_string()))?;

        if self.filter.initial_threshold <= 0.0 {
            return Err(invalid("filter.initial_threshold", "must be positive"));
        }
        if self.filter.escalation_factor <= 1.0 {
            return Err(invalid(
                "filter.escalation_factor",
                "must be greater than 1",
            ));
        }
        if self.filter.retake_budget == 0 {
            return Err(invalid("filter.retake_budget", "must be at least 1"));
        }

        let m = &self.mission;
        if m.altitude_m <= 0.0 || m.climb_rate_mps <= 0.0 {
            return Err(invalid(
                "mission.altitude_m",
                "altitude and climb rate must be positive",
            ));
        }
        if m.cruise_speed_mps <= 0.0 {
            return Err(invalid("mission.cruise_speed_mps", "must be positive"));
        }
        if m.sample_duration_s <= 0.0 {
            return Err(invalid("mission.sample_duration_s", "must be positive"));
        }
        if m.mission_duration_s < 0.0 {
            return Err(invalid("mission.mission_duration_s", "must be non-negative"));
        }
        if m.bins_per_sample < 2 {
            return Err(invalid("mission.bins_per_sample", "need at least 2 bins"));
        }
        let mut sorted = m.estimate_times_s.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        if sorted != m.estimate_times_s {
            return Err(invalid("mission.estimate_times_s", "must be sorted"));
        }
        if m.estimate_times_s
            .iter()
            .any(|&t| t < 0.0 || t > m.mission_duration_s)
        {
            return Err(invalid(
                "mission.estimate_times_s",
                "every estimate time must lie within the mission duration",
            ));
        }
        if m.startup_waypoints.len() != 3 {
            return Err(invalid(
                "mission.startup_waypoints",
                format!("expected 3 waypoints, got {}", m.startup_waypoints.len()),
            ));
        }
        let takeoff = GeoPoint::new(m.takeoff_lat, m.takeoff_lon);
        if !flight_grid.contains(takeoff) {
            return Err(invalid(
                "mission.takeoff_lat",
                "takeoff must lie inside the flight boundary",
            ));
        }
        let startup_waypoints: Vec<GeoPoint> = m
            .startup_waypoints
            .iter()
            .map(|&[lat, lon]| GeoPoint::new(lat, lon))
            .collect();
        for wp in &startup_waypoints {
            if !flight_grid.contains(*wp) {
                return Err(invalid(
                    "mission.startup_waypoints",
                    format!("waypoint ({}, {}) outside the flight boundary", wp.lat, wp.lon),
                ));
            }
        }
        if m.similar_point_count == 0 {
            return Err(invalid("mission.similar_point_count", "must be at least 1"));
        }
        if m.max_rejects == 0 {
            return Err(invalid("mission.max_rejects", "must be at least 1"));
        }
        if m.aux_circle_points == 0 || m.aux_circle_radius_m <= 0.0 {
            return Err(invalid(
                "mission.aux_circle_points",
                "aux circle needs at least 1 point and a positive radius",
            ));
        }

        Ok(MissionEnv {
            flight_grid,
            rover_grid,
            kernel_init,
            kernel_bounds,
            mean_gain_db: self.kernel.mean_gain_db,
            fit: FitOptions {
                restarts: self.optimizer.restarts,
                seed: self.seed,
                opt: OptOptions {
                    memory: self.optimizer.memory,
                    grad_tol: self.optimizer.grad_tol,
                    step_tol: self.optimizer.step_tol,
                    max_iters: self.optimizer.max_iters,
                },
            },
            ucb_decay: self.acquisition.ucb_decay,
            filter_threshold: self.filter.initial_threshold,
            filter_escalation: self.filter.escalation_factor,
            filter_retake_budget: self.filter.retake_budget,
            mission: MissionConfig {
                takeoff,
                altitude_m: m.altitude_m,
                climb_rate_mps: m.climb_rate_mps,
                cruise_speed_mps: m.cruise_speed_mps,
                sample_duration_s: m.sample_duration_s,
                mission_duration_s: m.mission_duration_s,
                estimate_times_s: m.estimate_times_s.clone(),
                startup_waypoints,
                bins_per_sample: m.bins_per_sample,
                similar_point_radius_m: m.similar_point_radius_m,
                similar_point_count: m.similar_point_count,
                max_rejects: m.max_rejects,
                aux_circle_radius_m: m.aux_circle_radius_m,
                aux_circle_points: m.aux_circle_points,
            },
            channel,
        })
    }

    /// One of the bundled scenarios. The mission area is a synthetic
    /// 600 m x 500 m flight rectangle holding a 500 m x 160 m rover strip
    /// (19.7 acres); the takeoff sits center-south with a startup triangle
    /// of roughly 140 m legs around it.
    pub fn preset(which: Preset) -> RunConfig {
        let base = GeoPoint::new(35.0, -78.0);
        let frame = LocalFrame::new(base);
        let g = |east: f64, north: f64| {
            let p = frame.to_geo(east, north);
            [p.lat, p.lon]
        };
        let flight_max = frame.to_geo(600.0, 500.0);
        let rover_min = frame.to_geo(50.0, 300.0);
        let rover_max = frame.to_geo(550.0, 460.0);
        let takeoff = frame.to_geo(300.0, 200.0);
        let tri = 80.0;
        let startup = vec![
            g(300.0, 200.0 + tri),
            g(300.0 - tri * (std::f64::consts::PI / 6.0).cos(), 200.0 - tri * 0.5),
            g(300.0 + tri * (std::f64::consts::PI / 6.0).cos(), 200.0 - tri * 0.5),
        ];

        // transmitter placements: 125 m, 330 m, 286 m from takeoff, all
        // inside the rover strip
        let (tx, shadowing, fade_prob, fade_depth, saturation) = match which {
            Preset::Near => (frame.to_geo(300.0, 325.0), 1.0, 0.0002, 30.0, -45.0),
            Preset::Far => (frame.to_geo(515.0, 450.0), 1.4, 0.004, 30.0, -40.0),
            Preset::Noisy => (frame.to_geo(144.4, 440.0), 1.8, 0.010, 35.0, -40.0),
        };

        RunConfig {
            seed: 1,
            flight_grid: GridConfig {
                min_lat: base.lat,
                min_lon: base.lon,
                max_lat: flight_max.lat,
                max_lon: flight_max.lon,
                rows: 64,
                cols: 64,
            },
            rover_grid: GridConfig {
                min_lat: rover_min.lat,
                min_lon: rover_min.lon,
                max_lat: rover_max.lat,
                max_lon: rover_max.lon,
                rows: 64,
                cols: 64,
            },
            kernel: KernelConfig {
                // a tighter prior-variance ceiling than the library default:
                // with the mean pinned at the noise floor, an unbounded scale
                // lets the fit interpolate dense near-transmitter clusters so
                // hard that the posterior mean rings above the data far from
                // the samples
                scale_bounds: (1e-3, 100.0),
                ..KernelConfig::default()
            },
            optimizer: OptimizerConfig::default(),
            acquisition: AcquisitionConfig::default(),
            channel: ChannelConfig {
                model: ModelKind::LogDistance,
                tx_lat: tx.lat,
                tx_lon: tx.lon,
                tx_power_db: -20.0,
                pathloss_exponent: 2.0,
                sigma_spread_deg: 0.002,
                shadowing_std_db: shadowing,
                noise_floor_db: -85.0,
                saturation_db: saturation,
                fade_prob,
                fade_depth_db: fade_depth,
                placement: TxPlacement::Fixed,
            },
            filter: FilterConfig::default(),
            mission: MissionSection {
                takeoff_lat: takeoff.lat,
                takeoff_lon: takeoff.lon,
                altitude_m: default_altitude(),
                climb_rate_mps: default_climb_rate(),
                cruise_speed_mps: default_cruise_speed(),
                sample_duration_s: default_sample_duration(),
                mission_duration_s: default_mission_duration(),
                estimate_times_s: default_estimate_times(),
                startup_waypoints: startup,
                bins_per_sample: default_bins_per_sample(),
                similar_point_radius_m: default_similar_radius(),
                similar_point_count: default_similar_count(),
                max_rejects: default_max_rejects(),
                aux_circle_radius_m: default_aux_radius(),
                aux_circle_points: default_aux_points(),
            },
        }
    }

    /// Human-oriented one-line summary of the scenario.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "tx=({}, {}) model={:?} duration={}s seed={}",
            self.channel.tx_lat,
            self.channel.tx_lon,
            self.channel.model,
            self.mission.mission_duration_s,
            self.seed
        );
        s
    }
}
