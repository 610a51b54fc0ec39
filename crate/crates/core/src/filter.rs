//! Quality-variance sample filter.
//!
//! A 6 s bin stream collapses into one [`SampleRecord`] whose
//! quality-variance statistic decides acceptance against a threshold. The
//! threshold is calibrated once, at the first stationary sample: while that
//! sample's variance exceeds the threshold the sample is retaken with an
//! exponentially escalated threshold, which then freezes for the mission.
//!
//! Unit contract: quality values in [0, 1] are scaled by 100 before taking
//! the (population) variance, so thresholds are in percent-squared units and
//! defaults like 35 or 67 are meaningful.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::BinReading;
use crate::geo::GeoPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("need at least 2 bins to summarize a sample, got {got}")]
    InsufficientBins { got: usize },
    #[error("first-sample calibration failed after {attempts} attempts (threshold reached {final_threshold})")]
    CalibrationFailed {
        attempts: u32,
        final_threshold: f64,
    },
}

/// One aggregated measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub location: GeoPoint,
    /// Seconds since takeoff at the end of the window.
    pub timestamp_s: f64,
    pub mean_power_db: f64,
    /// Population variance of quality x 100.
    pub quality_variance: f64,
    pub accepted: bool,
}

/// Mutable filter state owned by the mission controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub threshold: f64,
    pub escalation_factor: f64,
    pub rejected_count: u32,
}

impl Default for FilterState {
    fn default() -> Self {
        Self {
            threshold: 35.0,
            escalation_factor: 2.0,
            rejected_count: 0,
        }
    }
}

impl FilterState {
    pub fn new(threshold: f64, escalation_factor: f64) -> Self {
        Self {
            threshold,
            escalation_factor,
            rejected_count: 0,
        }
    }
}

/// Aggregates a bin stream into a [`SampleRecord`] with `accepted` still
/// undetermined (false until evaluated).
pub fn summarize(
    bins: &[BinReading],
    location: GeoPoint,
    timestamp_s: f64,
) -> Result<SampleRecord, FilterError> {
    if bins.len() < 2 {
        return Err(FilterError::InsufficientBins { got: bins.len() });
    }
    let n = bins.len() as f64;
    let mean_power_db = bins.iter().map(|b| b.power_db).sum::<f64>() / n;
    let mean_q = bins.iter().map(|b| b.quality * 100.0).sum::<f64>() / n;
    let quality_variance = bins
        .iter()
        .map(|b| (b.quality * 100.0 - mean_q).powi(2))
        .sum::<f64>()
        / n;
    Ok(SampleRecord {
        location,
        timestamp_s,
        mean_power_db,
        quality_variance,
        accepted: false,
    })
}

/// Accepts or rejects a summarized record against the current threshold.
/// Rejections bump `rejected_count`; ordinary rejects never move the
/// threshold.
pub fn evaluate(mut record: SampleRecord, state: &mut FilterState) -> SampleRecord {
    record.accepted = record.quality_variance <= state.threshold;
    if !record.accepted {
        state.rejected_count += 1;
    }
    record
}

/// First-sample threshold calibration.
///
/// Measures repeatedly with `sampler` (the drone stays put); each rejection
/// multiplies the threshold by the escalation factor and retakes. Returns the
/// accepted record and the number of measurements taken. Exceeding
/// `retake_budget` measurements fails calibration; the mission falls back to
/// its failsafe circle routine.
pub fn calibrate_first_sample<F>(
    mut sampler: F,
    state: &mut FilterState,
    retake_budget: u32,
) -> Result<(SampleRecord, u32), FilterError>
where
    F: FnMut() -> SampleRecord,
{
    for attempt in 1..=retake_budget.max(1) {
        let mut record = sampler();
        if record.quality_variance <= state.threshold {
            record.accepted = true;
            return Ok((record, attempt));
        }
        state.threshold *= state.escalation_factor;
    }
    Err(FilterError::CalibrationFailed {
        attempts: retake_budget.max(1),
        final_threshold: state.threshold,
    })
}
