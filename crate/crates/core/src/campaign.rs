//! Single-run and Monte-Carlo campaign drivers.
//!
//! A single run writes four artifacts into its output directory: the mission
//! log, the trajectory CSV, and the posterior mean/std rasters over the
//! flight grid. Campaigns run seeds `base .. base + n` (in parallel), keep
//! one subdirectory per run, and aggregate per-time mean/median errors; a
//! panicking run becomes a failed row and the campaign continues.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{RunConfig, TxPlacement};
use crate::geo::GeoPoint;
use crate::gp::{FittedGp, PosteriorField};
use crate::mission::{run_mission, MissionEnv, MissionReport};
use crate::raster::Raster;

const PLACEMENT_SALT: u64 = 0x5851_F42D_4C95_7F2D;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("cannot create output directory {path}: {source}")]
    OutputDir {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write artifact {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
}

/// Summary of one mission run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub tx_location: GeoPoint,
    /// (estimate time, error in meters) pairs.
    pub errors: Vec<(f64, f64)>,
    pub accepted: usize,
    pub rejected: usize,
    pub aux_circles: usize,
    pub failed: bool,
}

impl RunSummary {
    fn from_report(report: &MissionReport) -> Self {
        Self {
            seed: report.seed,
            tx_location: report.tx_location,
            errors: report
                .estimates
                .iter()
                .map(|e| (e.time_s, e.error_m))
                .collect(),
            accepted: report.accepted_count,
            rejected: report.rejected_count,
            aux_circles: report.aux_circles,
            failed: false,
        }
    }

    fn failed_row(seed: u64) -> Self {
        Self {
            seed,
            tx_location: GeoPoint::new(f64::NAN, f64::NAN),
            errors: Vec::new(),
            accepted: 0,
            rejected: 0,
            aux_circles: 0,
            failed: true,
        }
    }

    pub fn summary_line(&self) -> String {
        if self.failed {
            return format!("seed={} FAILED", self.seed);
        }
        let errs: Vec<String> = self
            .errors
            .iter()
            .map(|(t, e)| format!("err@{t}s={e:.1}m"))
            .collect();
        format!(
            "seed={} {} accepted={} rejected={} aux_circles={}",
            self.seed,
            errs.join(" "),
            self.accepted,
            self.rejected,
            self.aux_circles
        )
    }
}

/// Aggregate over a campaign; means and medians are recomputable from the
/// per-run rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub estimate_times: Vec<f64>,
    pub rows: Vec<RunSummary>,
    pub mean_errors: Vec<f64>,
    pub median_errors: Vec<f64>,
    pub failed_runs: usize,
}

impl CampaignSummary {
    fn aggregate(estimate_times: Vec<f64>, rows: Vec<RunSummary>) -> Self {
        let mut mean_errors = Vec::with_capacity(estimate_times.len());
        let mut median_errors = Vec::with_capacity(estimate_times.len());
        for (k, _) in estimate_times.iter().enumerate() {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| !r.failed)
                .filter_map(|r| r.errors.get(k).map(|&(_, e)| e))
                .collect();
            mean_errors.push(mean(&vals));
            median_errors.push(median(&vals));
        }
        let failed_runs = rows.iter().filter(|r| r.failed).count();
        Self {
            estimate_times,
            rows,
            mean_errors,
            median_errors,
            failed_runs,
        }
    }

    pub fn mean_error_at(&self, time_s: f64) -> Option<f64> {
        self.estimate_times
            .iter()
            .position(|&t| t == time_s)
            .map(|i| self.mean_errors[i])
    }

    pub fn median_error_at(&self, time_s: f64) -> Option<f64> {
        self.estimate_times
            .iter()
            .position(|&t| t == time_s)
            .map(|i| self.median_errors[i])
    }

    /// Per-run CSV table.
    pub fn to_csv(&self) -> String {
        let mut head = String::from("seed,tx_lat,tx_lon");
        for t in &self.estimate_times {
            head.push_str(&format!(",error_m_at_{t}s"));
        }
        head.push_str(",accepted,rejected,aux_circles,failed\n");
        let mut out = head;
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.seed, r.tx_location.lat, r.tx_location.lon));
            for k in 0..self.estimate_times.len() {
                match r.errors.get(k) {
                    Some((_, e)) => out.push_str(&format!(",{e}")),
                    None => out.push(','),
                }
            }
            out.push_str(&format!(
                ",{},{},{},{}\n",
                r.accepted, r.rejected, r.aux_circles, r.failed
            ));
        }
        out
    }

    /// Aggregate block, one line per estimate time.
    pub fn summary_text(&self) -> String {
        let mut out = format!(
            "runs={} failed={}\n",
            self.rows.len(),
            self.failed_runs
        );
        for (i, t) in self.estimate_times.iter().enumerate() {
            out.push_str(&format!(
                "t={t}s mean_error_m={} median_error_m={}\n",
                self.mean_errors[i], self.median_errors[i]
            ));
        }
        out
    }
}

fn mean(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

fn median(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return f64::NAN;
    }
    let mut v = vals.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CampaignError> {
    std::fs::write(path, contents).map_err(|source| CampaignError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Final flight-grid posterior of a finished mission (the prior if the run
/// collected no samples).
fn final_flight_posterior(env: &MissionEnv, report: &MissionReport) -> PosteriorField {
    if report.accepted_count == 0 {
        return PosteriorField::prior(&env.flight_grid, &env.kernel_init, env.mean_gain_db);
    }
    let params = report.final_params.unwrap_or(env.kernel_init);
    let mut training = crate::gp::TrainingSet::new();
    for rec in report.records.iter().filter(|r| r.accepted) {
        training.push(rec.location, rec.mean_power_db);
    }
    match FittedGp::from_params(&training, &params, env.mean_gain_db) {
        Ok(gp) => gp.posterior(&env.flight_grid),
        Err(_) => PosteriorField::prior(&env.flight_grid, &env.kernel_init, env.mean_gain_db),
    }
}

/// Writes the four per-run artifacts and returns the summary.
pub fn write_run_artifacts(
    env: &MissionEnv,
    report: &MissionReport,
    out_dir: &Path,
) -> Result<RunSummary, CampaignError> {
    std::fs::create_dir_all(out_dir).map_err(|source| CampaignError::OutputDir {
        path: out_dir.display().to_string(),
        source,
    })?;
    write_file(&out_dir.join("mission.log"), &report.log_string())?;
    write_file(&out_dir.join("trajectory.csv"), &report.trajectory_csv())?;
    let field = final_flight_posterior(env, report);
    Raster::mean_of(&field).write_csv(&out_dir.join("posterior_mean.csv"))?;
    Raster::std_of(&field).write_csv(&out_dir.join("posterior_std.csv"))?;
    Ok(RunSummary::from_report(report))
}

/// Executes one mission from a validated config and writes its artifacts.
pub fn run_single(
    config: &RunConfig,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<RunSummary, CampaignError> {
    let mut env = config.to_env()?;
    let seed = seed_override.unwrap_or(config.seed);
    env.channel.rng_seed = seed;
    let report = run_mission(&env, seed);
    write_run_artifacts(&env, &report, out_dir)
}

/// Per-run environment for campaign run `i`: seed `base + i`, transmitter
/// fixed or redrawn uniformly over the rover boundary.
pub fn campaign_env(config: &RunConfig, base_env: &MissionEnv, seed: u64) -> MissionEnv {
    let mut env = base_env.clone();
    env.channel.rng_seed = seed;
    if config.placement() == TxPlacement::Uniform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PLACEMENT_SALT);
        let min = env.rover_grid.min_corner();
        let max = env.rover_grid.max_corner();
        env.channel.tx_location = GeoPoint::new(
            rng.random_range(min.lat..=max.lat),
            rng.random_range(min.lon..=max.lon),
        );
    }
    env
}

/// Runs `n_runs` seeded missions in parallel, writing per-run artifact
/// directories plus `campaign.csv` and `summary.txt` at the root.
pub fn run_campaign(
    config: &RunConfig,
    n_runs: usize,
    base_seed: u64,
    out_dir: &Path,
) -> Result<CampaignSummary, CampaignError> {
    let base_env = config.to_env()?;
    std::fs::create_dir_all(out_dir).map_err(|source| CampaignError::OutputDir {
        path: out_dir.display().to_string(),
        source,
    })?;

    let rows: Vec<RunSummary> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i as u64;
            let env = campaign_env(config, &base_env, seed);
            let run_dir = out_dir.join(format!("run_{seed:04}"));
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                let report = run_mission(&env, seed);
                write_run_artifacts(&env, &report, &run_dir)
            }));
            match outcome {
                Ok(Ok(summary)) => summary,
                Ok(Err(_)) | Err(_) => RunSummary::failed_row(seed),
            }
        })
        .collect();

    let summary =
        CampaignSummary::aggregate(base_env.mission.estimate_times_s.clone(), rows);
    write_file(&out_dir.join("campaign.csv"), &summary.to_csv())?;
    write_file(&out_dir.join("summary.txt"), &summary.summary_text())?;
    Ok(summary)
}

/// Campaign over missions without touching the filesystem; used by tests
/// and quick statistics.
pub fn run_campaign_in_memory(
    config: &RunConfig,
    n_runs: usize,
    base_seed: u64,
) -> Result<CampaignSummary, CampaignError> {
    let base_env = config.to_env()?;
    let rows: Vec<RunSummary> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i as u64;
            let env = campaign_env(config, &base_env, seed);
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                RunSummary::from_report(&run_mission(&env, seed))
            }));
            outcome.unwrap_or_else(|_| RunSummary::failed_row(seed))
        })
        .collect();
    Ok(CampaignSummary::aggregate(
        base_env.mission.estimate_times_s.clone(),
        rows,
    ))
}
