//! Autonomous narrowband transmitter localization by Gaussian-process radio
//! mapping and Bayesian-optimization flight guidance.
//!
//! The crate simulates a drone mission over a geographic search area: a
//! synthetic channel produces noisy power/quality readings, a quality-variance
//! filter rejects fade-corrupted samples, an exact GP regressor maintains a
//! radio map posterior, and a UCB acquisition rule picks each next waypoint.
//! Timed location estimates are read off a second (rover) grid as the argmax
//! of the posterior mean.
//!
//! Modules follow the processing pipeline:
//!
//! * [`geo`] — lat/lon grids and a local equirectangular meter frame
//! * [`kernel`] — constant-scaled RBF + white-noise covariance and gradients
//! * [`optimize`] — box-constrained limited-memory quasi-Newton minimizer
//! * [`gp`] — exact GP regression with marginal-likelihood hyperparameter fits
//! * [`acquisition`] — UCB field and waypoint selection with decaying beta
//! * [`channel`] — synthetic pathloss/shadowing/fading channel
//! * [`filter`] — quality-variance sample filter with adaptive first-sample
//!   threshold calibration
//! * [`mission`] — mission state machine, kinematics, and timed estimates
//! * [`config`] — run configuration loading, validation, and presets
//! * [`raster`] — CSV grid rasters and PGM heatmap rendering
//! * [`campaign`] — single-run and Monte-Carlo campaign drivers

pub mod acquisition;
pub mod campaign;
pub mod channel;
pub mod config;
pub mod filter;
pub mod geo;
pub mod gp;
pub mod kernel;
pub mod mission;
pub mod optimize;
pub mod raster;

pub use acquisition::{next_waypoint, ucb_field, UcbSchedule};
pub use channel::{BinReading, ChannelModel, ModelKind};
pub use config::{Preset, RunConfig};
pub use filter::{FilterState, SampleRecord};
pub use geo::{GeoGrid, GeoPoint, LocalFrame};
pub use gp::{FittedGp, PosteriorField, TrainingSet};
pub use kernel::{HyperBounds, HyperParams};
pub use mission::{run_mission, MissionConfig, MissionEnv, MissionReport};
