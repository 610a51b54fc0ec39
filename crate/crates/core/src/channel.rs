//! Synthetic narrowband channel: deterministic spatial field plus per-bin
//! shadowing, deep-fade bursts, and receiver gain saturation.
//!
//! A sounder reading is a short stream of bins, each carrying a power in dB
//! and a normalized quality in [0, 1]. Quality here is normalized excess
//! power over the noise floor, so deep fades depress it sharply; any monotone
//! map of instantaneous SNR would serve the downstream variance filter
//! equally well.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, METERS_PER_DEG_LAT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("channel model invalid: {0}")]
    Invalid(String),
}

/// Spatial decay law of the noise-free field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `tx_power - 10 * n * log10(d_m)`, clamped to `[noise_floor, saturation]`.
    LogDistance,
    /// Gaussian bump in degree coordinates over the noise floor, clipped at
    /// the saturation ceiling.
    Gaussian2d,
}

/// One receiver bin: instantaneous power and normalized quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinReading {
    pub power_db: f64,
    pub quality: f64,
}

/// Transmitter, decay law, and noise/fade parameters for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub tx_location: GeoPoint,
    pub kind: ModelKind,
    pub tx_power_db: f64,
    /// Log-distance decay exponent.
    pub pathloss_exponent: f64,
    /// Gaussian-2d spatial spread, degrees.
    pub sigma_spread_deg: f64,
    pub shadowing_std_db: f64,
    pub noise_floor_db: f64,
    /// Receiver clipping ceiling; values above it flatten into a plateau.
    pub saturation_db: f64,
    /// Per-bin probability of a deep fade.
    pub fade_prob: f64,
    pub fade_depth_db: f64,
    pub rng_seed: u64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !self.tx_location.is_valid() {
            return Err(ChannelError::Invalid("tx_location out of range".into()));
        }
        let floor_below_ceiling =
            self.noise_floor_db.is_finite() && self.noise_floor_db < self.saturation_db;
        if !floor_below_ceiling {
            return Err(ChannelError::Invalid(format!(
                "noise_floor_db {} must be below saturation_db {}",
                self.noise_floor_db, self.saturation_db
            )));
        }
        if !(0.0..=1.0).contains(&self.fade_prob) {
            return Err(ChannelError::Invalid(format!(
                "fade_prob {} must be in [0, 1]",
                self.fade_prob
            )));
        }
        if self.pathloss_exponent <= 0.0 {
            return Err(ChannelError::Invalid(format!(
                "pathloss_exponent {} must be positive",
                self.pathloss_exponent
            )));
        }
        if self.kind == ModelKind::Gaussian2d && self.sigma_spread_deg <= 0.0 {
            return Err(ChannelError::Invalid(format!(
                "sigma_spread_deg {} must be positive",
                self.sigma_spread_deg
            )));
        }
        if self.shadowing_std_db < 0.0 || self.fade_depth_db < 0.0 {
            return Err(ChannelError::Invalid(
                "shadowing_std_db and fade_depth_db must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn distance_m(&self, x: GeoPoint) -> f64 {
        let dn = (x.lat - self.tx_location.lat) * METERS_PER_DEG_LAT;
        let de = (x.lon - self.tx_location.lon)
            * METERS_PER_DEG_LAT
            * self.tx_location.lat.to_radians().cos();
        de.hypot(dn)
    }

    /// Deterministic noise-free field value at `x`, dB. Always within
    /// `[noise_floor, saturation]`; distances below 1 m are clamped to 1 m.
    pub fn true_field(&self, x: GeoPoint) -> f64 {
        let raw = match self.kind {
            ModelKind::LogDistance => {
                let d = self.distance_m(x).max(1.0);
                self.tx_power_db - 10.0 * self.pathloss_exponent * d.log10()
            }
            ModelKind::Gaussian2d => {
                let dlat = x.lat - self.tx_location.lat;
                let dlon = x.lon - self.tx_location.lon;
                let d2 = dlat * dlat + dlon * dlon;
                let s2 = self.sigma_spread_deg * self.sigma_spread_deg;
                self.noise_floor_db
                    + (self.tx_power_db - self.noise_floor_db) * (-d2 / (2.0 * s2)).exp()
            }
        };
        raw.clamp(self.noise_floor_db, self.saturation_db)
    }

    /// Normalized quality for an instantaneous power level.
    pub fn quality_of(&self, power_db: f64) -> f64 {
        ((power_db - self.noise_floor_db) / (self.saturation_db - self.noise_floor_db))
            .clamp(0.0, 1.0)
    }

    /// Draws `n_bins` readings at `x`. Per bin, in fixed draw order: one
    /// standard-normal shadowing draw, then one uniform fade draw.
    pub fn sample_bins<R: Rng + ?Sized>(
        &self,
        x: GeoPoint,
        n_bins: usize,
        rng: &mut R,
    ) -> Vec<BinReading> {
        let base = self.true_field(x);
        (0..n_bins)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                let faded = rng.random::<f64>() < self.fade_prob;
                let power_db = base + z * self.shadowing_std_db
                    - if faded { self.fade_depth_db } else { 0.0 };
                BinReading {
                    power_db,
                    quality: self.quality_of(power_db),
                }
            })
            .collect()
    }
}
