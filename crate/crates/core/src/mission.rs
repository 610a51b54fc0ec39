//! Mission state machine: takeoff, calibrated first sample, startup
//! waypoints, the autonomous acquisition loop, auxiliary circle routines,
//! and timed location estimates.
//!
//! Time advances in discrete events (a climb, a travel leg at cruise speed,
//! or a stationary sampling window); there is no physics integration. Heading
//! is fixed northwest for the whole flight and is logged but has no simulated
//! effect. The phase graph is
//!
//! ```text
//! Takeoff -> FirstSample -> StartupWaypoints -> AutonomousBo
//!                     AutonomousBo -> AuxCircle    (trigger or failsafe)
//!                     AuxCircle    -> AutonomousBo (circle complete)
//!                     any          -> Done         (mission clock)
//! ```
//!
//! Estimates are read from the rover grid as the argmax of the GP mean at
//! the moment the clock crosses each configured estimate time; a crossing in
//! the middle of an event sees the GP state from before that event's data
//! lands, a crossing exactly at an event boundary sees it after.

use std::collections::VecDeque;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, UcbSchedule};
use crate::channel::ChannelModel;
use crate::filter::{self, FilterState, SampleRecord};
use crate::geo::{GeoGrid, GeoPoint, LocalFrame};
use crate::gp::{self, FitOptions, FittedGp, PosteriorField, TrainingSet};
use crate::kernel::{HyperBounds, HyperParams};

const FIT_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Takeoff,
    FirstSample,
    StartupWaypoints,
    AutonomousBo,
    AuxCircle,
    Done,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Takeoff => "takeoff",
            Phase::FirstSample => "first-sample",
            Phase::StartupWaypoints => "startup-waypoints",
            Phase::AutonomousBo => "autonomous-bo",
            Phase::AuxCircle => "aux-circle",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxTrigger {
    /// The acquisition repeatedly chose spatially similar targets.
    SimilarPoints,
    /// Too many rejected measurements (also arms the calibration failsafe).
    MaxRejects,
}

impl AuxTrigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuxTrigger::SimilarPoints => "similar-points",
            AuxTrigger::MaxRejects => "max-rejects",
        }
    }
}

/// Flight and sampling parameters for one mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig {
    pub takeoff: GeoPoint,
    pub altitude_m: f64,
    pub climb_rate_mps: f64,
    pub cruise_speed_mps: f64,
    pub sample_duration_s: f64,
    pub mission_duration_s: f64,
    /// Sorted, each at most `mission_duration_s`.
    pub estimate_times_s: Vec<f64>,
    pub startup_waypoints: Vec<GeoPoint>,
    pub bins_per_sample: usize,
    pub similar_point_radius_m: f64,
    pub similar_point_count: usize,
    pub max_rejects: u32,
    pub aux_circle_radius_m: f64,
    pub aux_circle_points: usize,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            takeoff: GeoPoint::new(0.0, 0.0),
            altitude_m: 40.0,
            climb_rate_mps: 1.0,
            cruise_speed_mps: 10.0,
            sample_duration_s: 6.0,
            mission_duration_s: 600.0,
            estimate_times_s: vec![180.0, 600.0],
            startup_waypoints: Vec::new(),
            bins_per_sample: 60,
            similar_point_radius_m: 20.0,
            similar_point_count: 5,
            max_rejects: 8,
            aux_circle_radius_m: 60.0,
            aux_circle_points: 8,
        }
    }
}

/// Everything a mission run needs, assembled by the configuration layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionEnv {
    pub flight_grid: GeoGrid,
    pub rover_grid: GeoGrid,
    pub kernel_init: HyperParams,
    pub kernel_bounds: HyperBounds,
    /// GP mean constant g: the default channel gain with no signal, dB.
    pub mean_gain_db: f64,
    pub fit: FitOptions,
    pub ucb_decay: f64,
    pub filter_threshold: f64,
    pub filter_escalation: f64,
    pub filter_retake_budget: u32,
    pub mission: MissionConfig,
    pub channel: ChannelModel,
}

/// Mission-clock snapshot of the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionState {
    pub phase: Phase,
    pub clock_s: f64,
    pub position: GeoPoint,
    pub training: TrainingSet,
    pub filter: FilterState,
    pub schedule: UcbSchedule,
    pub recent_targets: Vec<GeoPoint>,
    pub aux_triggered_by: Option<AuxTrigger>,
    pub estimates: Vec<TimedEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEstimate {
    pub time_s: f64,
    pub location: GeoPoint,
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_s: f64,
    pub phase: Phase,
    /// Drone position when the record was emitted.
    pub position: GeoPoint,
    pub detail: EventDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventDetail {
    Start {
        seed: u64,
    },
    Climb {
        duration_s: f64,
    },
    /// One calibration measurement window; `threshold_before` is the
    /// threshold it was judged against.
    CalibrationSample {
        record: SampleRecord,
        threshold_before: f64,
    },
    CalibrationResult {
        attempts: u32,
        threshold: f64,
        accepted: bool,
    },
    Travel {
        from: GeoPoint,
        to: GeoPoint,
        distance_m: f64,
    },
    /// Acquisition decision (zero duration).
    Target {
        waypoint: GeoPoint,
        beta: f64,
    },
    Sample {
        record: SampleRecord,
        refit: Option<HyperParams>,
        training_size: usize,
    },
    AuxEnter {
        trigger: AuxTrigger,
        points: usize,
    },
    AuxExit,
    Estimate {
        time_s: f64,
        location: GeoPoint,
        error_m: f64,
    },
    PhaseChange {
        from: Phase,
        to: Phase,
    },
    Done,
}

/// Full record of one mission, sufficient to rebuild every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub seed: u64,
    pub tx_location: GeoPoint,
    pub estimates: Vec<TimedEstimate>,
    pub final_params: Option<HyperParams>,
    pub final_threshold: f64,
    pub records: Vec<SampleRecord>,
    pub trajectory: Vec<(f64, GeoPoint)>,
    pub events: Vec<EventRecord>,
    pub total_time_s: f64,
    pub accepted_count: usize,
    pub rejected_count: usize,
    pub aux_circles: usize,
}

impl MissionReport {
    /// Localization error of the estimate at `time_s`, if recorded.
    pub fn error_at(&self, time_s: f64) -> Option<f64> {
        self.estimates
            .iter()
            .find(|e| e.time_s == time_s)
            .map(|e| e.error_m)
    }

    /// Line-delimited mission log; field list documented in the README.
    pub fn write_log<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for ev in &self.events {
            let head = format!(
                "t={} phase={} pos_lat={} pos_lon={}",
                ev.t_s,
                ev.phase.as_str(),
                ev.position.lat,
                ev.position.lon
            );
            match &ev.detail {
                EventDetail::Start { seed } => {
                    writeln!(w, "{head} event=start seed={seed} heading=northwest")?;
                }
                EventDetail::Climb { duration_s } => {
                    writeln!(w, "{head} event=climb duration_s={duration_s}")?;
                }
                EventDetail::CalibrationSample {
                    record,
                    threshold_before,
                } => {
                    writeln!(
                        w,
                        "{head} event=calibration-sample lat={} lon={} mean_power_db={} quality_variance={} threshold={}",
                        record.location.lat,
                        record.location.lon,
                        record.mean_power_db,
                        record.quality_variance,
                        threshold_before,
                    )?;
                }
                EventDetail::CalibrationResult {
                    attempts,
                    threshold,
                    accepted,
                } => {
                    writeln!(
                        w,
                        "{head} event=calibration-result attempts={attempts} threshold={threshold} accepted={accepted}"
                    )?;
                }
                EventDetail::Travel {
                    from,
                    to,
                    distance_m,
                } => {
                    writeln!(
                        w,
                        "{head} event=travel from_lat={} from_lon={} to_lat={} to_lon={} distance_m={}",
                        from.lat, from.lon, to.lat, to.lon, distance_m
                    )?;
                }
                EventDetail::Target { waypoint, beta } => {
                    writeln!(
                        w,
                        "{head} event=target lat={} lon={} beta={}",
                        waypoint.lat, waypoint.lon, beta
                    )?;
                }
                EventDetail::Sample {
                    record,
                    refit,
                    training_size,
                } => {
                    write!(
                        w,
                        "{head} event=sample lat={} lon={} mean_power_db={} quality_variance={} accepted={} n_train={}",
                        record.location.lat,
                        record.location.lon,
                        record.mean_power_db,
                        record.quality_variance,
                        record.accepted,
                        training_size,
                    )?;
                    match refit {
                        Some(p) => writeln!(
                            w,
                            " scale={} lengthscale={} noise={}",
                            p.scale, p.lengthscale, p.noise
                        )?,
                        None => writeln!(w)?,
                    }
                }
                EventDetail::AuxEnter { trigger, points } => {
                    writeln!(
                        w,
                        "{head} event=aux-enter trigger={} points={points}",
                        trigger.as_str()
                    )?;
                }
                EventDetail::AuxExit => writeln!(w, "{head} event=aux-exit")?,
                EventDetail::Estimate {
                    time_s,
                    location,
                    error_m,
                } => {
                    writeln!(
                        w,
                        "{head} event=estimate estimate_time_s={time_s} lat={} lon={} error_m={}",
                        location.lat, location.lon, error_m
                    )?;
                }
                EventDetail::PhaseChange { from, to } => {
                    writeln!(
                        w,
                        "{head} event=phase-change from={} to={}",
                        from.as_str(),
                        to.as_str()
                    )?;
                }
                EventDetail::Done => writeln!(w, "{head} event=done")?,
            }
        }
        Ok(())
    }

    pub fn log_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_log(&mut buf).expect("write to vec cannot fail");
        String::from_utf8(buf).expect("log is ascii")
    }

    /// Trajectory CSV: `t_s,lat,lon` per row, header included.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("t_s,lat,lon\n");
        for (t, p) in &self.trajectory {
            out.push_str(&format!("{t},{},{}\n", p.lat, p.lon));
        }
        out
    }
}

/// Returns the aux-routine trigger to fire, if any. Similar-points is
/// checked first: the last `similar_point_count` chosen targets must all lie
/// within `similar_point_radius_m` of their centroid.
pub fn check_aux_triggers(
    recent_targets: &[GeoPoint],
    rejected_count: u32,
    cfg: &MissionConfig,
) -> Option<AuxTrigger> {
    if cfg.similar_point_count > 0 && recent_targets.len() >= cfg.similar_point_count {
        let tail = &recent_targets[recent_targets.len() - cfg.similar_point_count..];
        let n = tail.len() as f64;
        let centroid = GeoPoint::new(
            tail.iter().map(|p| p.lat).sum::<f64>() / n,
            tail.iter().map(|p| p.lon).sum::<f64>() / n,
        );
        let frame = LocalFrame::new(centroid);
        let all_close = tail.iter().all(|&p| {
            frame
                .distance_m(centroid, p)
                .map(|d| d <= cfg.similar_point_radius_m)
                .unwrap_or(false)
        });
        if all_close {
            return Some(AuxTrigger::SimilarPoints);
        }
    }
    if rejected_count >= cfg.max_rejects {
        return Some(AuxTrigger::MaxRejects);
    }
    None
}

/// Evenly spaced circle of waypoints around `center`, clamped into the
/// flight boundary, ordered by increasing angle from east and rotated so
/// traversal starts at the point nearest the current (= center) position.
pub fn make_aux_circle(center: GeoPoint, cfg: &MissionConfig, grid: &GeoGrid) -> Vec<GeoPoint> {
    let frame = LocalFrame::new(center);
    let n = cfg.aux_circle_points.max(1);
    let pts: Vec<GeoPoint> = (0..n)
        .map(|k| {
            let ang = std::f64::consts::TAU * k as f64 / n as f64;
            let p = frame.to_geo(
                cfg.aux_circle_radius_m * ang.cos(),
                cfg.aux_circle_radius_m * ang.sin(),
            );
            grid.clamp(p)
        })
        .collect();
    let mut start = 0;
    let mut best = f64::INFINITY;
    for (i, &p) in pts.iter().enumerate() {
        let d = frame.distance_m(center, p).unwrap_or(f64::INFINITY);
        if d < best {
            best = d;
            start = i;
        }
    }
    let mut ordered = pts;
    ordered.rotate_left(start);
    ordered
}

/// One mission in progress. Construct with [`Mission::new`], drive with
/// [`Mission::step`] or [`Mission::run`].
pub struct Mission<'a> {
    env: &'a MissionEnv,
    seed: u64,
    state: MissionState,
    rng: ChaCha8Rng,
    frame: LocalFrame,
    gp: Option<FittedGp>,
    flight_posterior: Option<PosteriorField>,
    current_params: HyperParams,
    startup_queue: VecDeque<GeoPoint>,
    aux_queue: VecDeque<GeoPoint>,
    pending_target: Option<GeoPoint>,
    next_estimate_idx: usize,
    refit_count: u64,
    aux_circles: usize,
    records: Vec<SampleRecord>,
    trajectory: Vec<(f64, GeoPoint)>,
    events: Vec<EventRecord>,
}

impl<'a> Mission<'a> {
    pub fn new(env: &'a MissionEnv, seed: u64) -> Self {
        let takeoff = env.flight_grid.clamp(env.mission.takeoff);
        let state = MissionState {
            phase: Phase::Takeoff,
            clock_s: 0.0,
            position: takeoff,
            training: TrainingSet::new(),
            filter: FilterState::new(env.filter_threshold, env.filter_escalation),
            schedule: UcbSchedule::new(env.ucb_decay),
            recent_targets: Vec::new(),
            aux_triggered_by: None,
            estimates: Vec::new(),
        };
        let center = GeoPoint::new(
            0.5 * (env.flight_grid.min_corner().lat + env.flight_grid.max_corner().lat),
            0.5 * (env.flight_grid.min_corner().lon + env.flight_grid.max_corner().lon),
        );
        let startup_queue = env
            .mission
            .startup_waypoints
            .iter()
            .map(|&p| env.flight_grid.clamp(p))
            .collect();
        let mut mission = Self {
            env,
            seed,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            frame: LocalFrame::new(center),
            gp: None,
            flight_posterior: None,
            current_params: env.kernel_init,
            startup_queue,
            aux_queue: VecDeque::new(),
            pending_target: None,
            next_estimate_idx: 0,
            refit_count: 0,
            aux_circles: 0,
            records: Vec::new(),
            trajectory: vec![(0.0, takeoff)],
            events: Vec::new(),
        };
        mission.push_event(EventDetail::Start { seed });
        mission.record_due_estimates();
        mission
    }

    pub fn state(&self) -> &MissionState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    fn push_event(&mut self, detail: EventDetail) {
        self.events.push(EventRecord {
            t_s: self.state.clock_s,
            phase: self.state.phase,
            position: self.state.position,
            detail,
        });
    }

    fn set_phase(&mut self, to: Phase) {
        let from = self.state.phase;
        if from == to {
            return;
        }
        self.push_event(EventDetail::PhaseChange { from, to });
        self.state.phase = to;
    }

    /// Rover-grid argmax of the current GP mean (the prior before any fit).
    fn rover_estimate(&self) -> GeoPoint {
        match &self.gp {
            Some(gp) => gp.posterior(&self.env.rover_grid).argmax_mean(),
            None => PosteriorField::prior(
                &self.env.rover_grid,
                &self.env.kernel_init,
                self.env.mean_gain_db,
            )
            .argmax_mean(),
        }
    }

    fn record_estimate(&mut self, time_s: f64) {
        let location = self.rover_estimate();
        let error_m = self
            .frame
            .distance_m(location, self.env.channel.tx_location)
            .expect("transmitter and rover grid share the mission frame");
        self.state.estimates.push(TimedEstimate {
            time_s,
            location,
            error_m,
        });
        self.push_event(EventDetail::Estimate {
            time_s,
            location,
            error_m,
        });
    }

    /// Records every pending estimate with time <= clock (post-event state).
    fn record_due_estimates(&mut self) {
        while self.next_estimate_idx < self.env.mission.estimate_times_s.len() {
            let te = self.env.mission.estimate_times_s[self.next_estimate_idx];
            if te > self.state.clock_s {
                break;
            }
            self.record_estimate(te);
            self.next_estimate_idx += 1;
        }
    }

    /// Advances the clock by `dt`, recording estimates whose times fall
    /// strictly inside the interval (they see the pre-event GP and are
    /// stamped at their crossing time).
    fn advance(&mut self, dt: f64) {
        let t1 = self.state.clock_s + dt;
        while self.next_estimate_idx < self.env.mission.estimate_times_s.len() {
            let te = self.env.mission.estimate_times_s[self.next_estimate_idx];
            if te >= t1 {
                break;
            }
            self.state.clock_s = te;
            self.record_estimate(te);
            self.next_estimate_idx += 1;
        }
        self.state.clock_s = t1;
    }

    fn travel_to(&mut self, wp: GeoPoint) {
        let from = self.state.position;
        let distance_m = self
            .frame
            .distance_m(from, wp)
            .expect("waypoints stay inside the flight area");
        self.advance(distance_m / self.env.mission.cruise_speed_mps);
        self.state.position = wp;
        self.push_event(EventDetail::Travel {
            from,
            to: wp,
            distance_m,
        });
        self.trajectory.push((self.state.clock_s, wp));
        self.record_due_estimates();
    }

    fn refit(&mut self) -> Option<HyperParams> {
        let opts = FitOptions {
            restarts: self.env.fit.restarts,
            seed: (self.seed ^ FIT_SEED_SALT).wrapping_add(self.refit_count),
            opt: self.env.fit.opt,
        };
        self.refit_count += 1;
        match gp::fit(
            &self.state.training,
            &self.current_params,
            &self.env.kernel_bounds,
            self.env.mean_gain_db,
            &opts,
        ) {
            Ok(fitted) => {
                self.current_params = *fitted.params();
                self.flight_posterior = Some(fitted.posterior(&self.env.flight_grid));
                self.gp = Some(fitted);
                Some(self.current_params)
            }
            // keep the previous posterior; the next accepted sample retries
            Err(_) => None,
        }
    }

    /// One stationary sampling window at the current position.
    fn take_sample(&mut self) {
        let pos = self.state.position;
        let bins = self
            .env
            .channel
            .sample_bins(pos, self.env.mission.bins_per_sample, &mut self.rng);
        self.advance(self.env.mission.sample_duration_s);
        let record = filter::summarize(&bins, pos, self.state.clock_s)
            .expect("bins_per_sample is validated to be at least 2");
        let record = filter::evaluate(record, &mut self.state.filter);
        self.records.push(record);
        let refit = if record.accepted {
            self.state.training.push(pos, record.mean_power_db);
            self.state.schedule.record_accepted();
            self.refit()
        } else {
            None
        };
        let training_size = self.state.training.len();
        self.push_event(EventDetail::Sample {
            record,
            refit,
            training_size,
        });
        self.record_due_estimates();
    }

    fn flight_field(&self) -> PosteriorField {
        match &self.flight_posterior {
            Some(field) => field.clone(),
            None => PosteriorField::prior(
                &self.env.flight_grid,
                &self.env.kernel_init,
                self.env.mean_gain_db,
            ),
        }
    }

    fn enter_aux(&mut self, trigger: AuxTrigger) {
        let circle = make_aux_circle(self.state.position, &self.env.mission, &self.env.flight_grid);
        self.state.recent_targets.clear();
        self.pending_target = None;
        self.state.aux_triggered_by = Some(trigger);
        self.aux_circles += 1;
        self.push_event(EventDetail::AuxEnter {
            trigger,
            points: circle.len(),
        });
        self.aux_queue = circle.into();
        self.set_phase(Phase::AuxCircle);
    }

    fn exit_aux(&mut self) {
        self.state.filter.rejected_count = 0;
        self.state.aux_triggered_by = None;
        self.push_event(EventDetail::AuxExit);
        self.set_phase(Phase::AutonomousBo);
    }

    /// First-sample calibration: retake with an exponentially escalated
    /// threshold until accepted; on budget exhaustion, skip the startup
    /// waypoints and force the max-rejects failsafe so the next loop step
    /// circles the current position.
    fn step_first_sample(&mut self) {
        let pos = self.state.position;
        let n_bins = self.env.mission.bins_per_sample;
        let dur = self.env.mission.sample_duration_s;
        let t0 = self.state.clock_s;
        let budget = self.env.filter_retake_budget;
        let escalation = self.state.filter.escalation_factor;
        let threshold_probe = std::cell::Cell::new(self.state.filter.threshold);

        let mut attempts: Vec<(SampleRecord, f64)> = Vec::new();
        let result = {
            let channel = &self.env.channel;
            let rng = &mut self.rng;
            let attempts = &mut attempts;
            let threshold_probe = &threshold_probe;
            let mut attempt = 0u32;
            let sampler = move || {
                attempt += 1;
                let bins = channel.sample_bins(pos, n_bins, rng);
                let record = filter::summarize(&bins, pos, t0 + f64::from(attempt) * dur)
                    .expect("bins_per_sample is validated to be at least 2");
                attempts.push((record, threshold_probe.get()));
                threshold_probe.set(threshold_probe.get() * escalation);
                record
            };
            filter::calibrate_first_sample(sampler, &mut self.state.filter, budget)
        };

        match result {
            Ok((accepted_record, n_attempts)) => {
                self.advance(f64::from(n_attempts) * dur);
                // rejected retakes are logged as calibration samples; the
                // accepted window is logged once below as the training sample
                let total = attempts.len();
                for (rec, thr) in attempts.into_iter().take(total - 1) {
                    self.records.push(rec);
                    self.push_event(EventDetail::CalibrationSample {
                        record: rec,
                        threshold_before: thr,
                    });
                }
                self.records.push(accepted_record);
                self.push_event(EventDetail::CalibrationResult {
                    attempts: n_attempts,
                    threshold: self.state.filter.threshold,
                    accepted: true,
                });
                self.state
                    .training
                    .push(accepted_record.location, accepted_record.mean_power_db);
                self.state.schedule.record_accepted();
                let refit = self.refit();
                let training_size = self.state.training.len();
                self.push_event(EventDetail::Sample {
                    record: accepted_record,
                    refit,
                    training_size,
                });
                self.record_due_estimates();
                self.set_phase(Phase::StartupWaypoints);
            }
            Err(_) => {
                let n_attempts = attempts.len() as u32;
                self.advance(f64::from(n_attempts) * dur);
                for (record, thr) in attempts {
                    self.records.push(record);
                    self.push_event(EventDetail::CalibrationSample {
                        record,
                        threshold_before: thr,
                    });
                }
                self.push_event(EventDetail::CalibrationResult {
                    attempts: n_attempts,
                    threshold: self.state.filter.threshold,
                    accepted: false,
                });
                self.record_due_estimates();
                self.state.filter.rejected_count = self
                    .state
                    .filter
                    .rejected_count
                    .max(self.env.mission.max_rejects);
                self.startup_queue.clear();
                self.set_phase(Phase::StartupWaypoints);
            }
        }
    }

    /// Executes exactly one event (or a zero-time transition) and advances
    /// the mission clock accordingly.
    pub fn step(&mut self) {
        if self.state.phase == Phase::Done {
            return;
        }
        if self.state.clock_s >= self.env.mission.mission_duration_s {
            self.set_phase(Phase::Done);
            self.push_event(EventDetail::Done);
            return;
        }
        match self.state.phase {
            Phase::Takeoff => {
                let duration_s = self.env.mission.altitude_m / self.env.mission.climb_rate_mps;
                self.advance(duration_s);
                self.push_event(EventDetail::Climb { duration_s });
                self.record_due_estimates();
                self.set_phase(Phase::FirstSample);
            }
            Phase::FirstSample => self.step_first_sample(),
            Phase::StartupWaypoints => {
                if let Some(&wp) = self.startup_queue.front() {
                    if self.state.position != wp {
                        self.travel_to(wp);
                    } else {
                        self.take_sample();
                        self.startup_queue.pop_front();
                        if self.startup_queue.is_empty() {
                            self.set_phase(Phase::AutonomousBo);
                        }
                    }
                } else {
                    self.set_phase(Phase::AutonomousBo);
                }
            }
            Phase::AutonomousBo => {
                if let Some(trigger) = check_aux_triggers(
                    &self.state.recent_targets,
                    self.state.filter.rejected_count,
                    &self.env.mission,
                ) {
                    self.enter_aux(trigger);
                } else if let Some(target) = self.pending_target {
                    if self.state.position != target {
                        self.travel_to(target);
                    } else {
                        self.take_sample();
                        self.pending_target = None;
                    }
                } else {
                    let field = self.flight_field();
                    let wp = acquisition::next_waypoint(&field, &self.state.schedule);
                    self.state.recent_targets.push(wp);
                    let cap = self.env.mission.similar_point_count.max(1);
                    while self.state.recent_targets.len() > cap {
                        self.state.recent_targets.remove(0);
                    }
                    self.push_event(EventDetail::Target {
                        waypoint: wp,
                        beta: self.state.schedule.beta(),
                    });
                    if self.state.position != wp {
                        self.pending_target = Some(wp);
                        self.travel_to(wp);
                    } else {
                        self.take_sample();
                    }
                }
            }
            Phase::AuxCircle => {
                if let Some(&wp) = self.aux_queue.front() {
                    if self.state.position != wp {
                        self.travel_to(wp);
                    } else {
                        self.take_sample();
                        self.aux_queue.pop_front();
                        if self.aux_queue.is_empty() {
                            self.exit_aux();
                        }
                    }
                } else {
                    self.exit_aux();
                }
            }
            Phase::Done => {}
        }
        if self.state.clock_s >= self.env.mission.mission_duration_s
            && self.state.phase != Phase::Done
        {
            self.set_phase(Phase::Done);
            self.push_event(EventDetail::Done);
        }
    }

    /// Drives the mission to completion and assembles the report.
    pub fn run(mut self) -> MissionReport {
        while self.state.phase != Phase::Done {
            self.step();
        }
        let accepted_count = self.records.iter().filter(|r| r.accepted).count();
        let rejected_count = self.records.len() - accepted_count;
        MissionReport {
            seed: self.seed,
            tx_location: self.env.channel.tx_location,
            estimates: self.state.estimates,
            final_params: self.gp.as_ref().map(|g| *g.params()),
            final_threshold: self.state.filter.threshold,
            records: self.records,
            trajectory: self.trajectory,
            events: self.events,
            total_time_s: self.state.clock_s,
            accepted_count,
            rejected_count,
            aux_circles: self.aux_circles,
        }
    }
}

/// Runs one full mission, deterministic in (`env`, `seed`).
pub fn run_mission(env: &MissionEnv, seed: u64) -> MissionReport {
    Mission::new(env, seed).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ModelKind;
    use crate::optimize::OptOptions;

    /// A compact synthetic environment: 300 m x 300 m flight area at 16x16,
    /// transmitter in the northern rover strip.
    fn test_env() -> MissionEnv {
        let origin = GeoPoint::new(35.0, -78.0);
        let frame = LocalFrame::new(origin);
        let flight_max = frame.to_geo(300.0, 300.0);
        let flight_grid = GeoGrid::new(origin, flight_max, 16, 16).unwrap();
        let rover_grid =
            GeoGrid::new(frame.to_geo(20.0, 150.0), frame.to_geo(280.0, 280.0), 16, 16).unwrap();
        let takeoff = frame.to_geo(150.0, 40.0);
        let tx = frame.to_geo(160.0, 200.0);
        let startup = vec![
            frame.to_geo(150.0, 110.0),
            frame.to_geo(90.0, 10.0),
            frame.to_geo(210.0, 10.0),
        ];
        MissionEnv {
            flight_grid,
            rover_grid,
            kernel_init: HyperParams::default(),
            kernel_bounds: HyperBounds::default(),
            mean_gain_db: -85.0,
            fit: FitOptions {
                restarts: 1,
                seed: 0,
                opt: OptOptions {
                    max_iters: 60,
                    ..OptOptions::default()
                },
            },
            ucb_decay: 0.95,
            filter_threshold: 35.0,
            filter_escalation: 2.0,
            filter_retake_budget: 10,
            mission: MissionConfig {
                takeoff,
                mission_duration_s: 420.0,
                estimate_times_s: vec![180.0, 420.0],
                startup_waypoints: startup,
                ..MissionConfig::default()
            },
            channel: ChannelModel {
                tx_location: tx,
                kind: ModelKind::LogDistance,
                tx_power_db: -20.0,
                pathloss_exponent: 2.0,
                sigma_spread_deg: 0.002,
                shadowing_std_db: 1.0,
                noise_floor_db: -85.0,
                saturation_db: -40.0,
                fade_prob: 0.0,
                fade_depth_db: 30.0,
                rng_seed: 0,
            },
        }
    }

    fn legal_edge(from: Phase, to: Phase) -> bool {
        use Phase::*;
        matches!(
            (from, to),
            (Takeoff, FirstSample)
                | (FirstSample, StartupWaypoints)
                | (StartupWaypoints, AutonomousBo)
                | (AutonomousBo, AuxCircle)
                | (AuxCircle, AutonomousBo)
                | (_, Done)
        )
    }

    #[test]
    fn first_transitions_and_climb_time() {
        let env = test_env();
        let mut m = Mission::new(&env, 1);
        assert_eq!(m.phase(), Phase::Takeoff);
        m.step();
        assert_eq!(m.phase(), Phase::FirstSample);
        assert_eq!(m.state().clock_s, 40.0);
    }

    #[test]
    fn startup_waypoints_lead_to_autonomous_bo() {
        let env = test_env();
        let mut m = Mission::new(&env, 1);
        let mut guard = 0;
        while m.phase() != Phase::AutonomousBo && m.phase() != Phase::Done {
            m.step();
            guard += 1;
            assert!(guard < 100, "stuck before reaching the autonomous loop");
        }
        assert_eq!(m.phase(), Phase::AutonomousBo);
        // first sample + three startup samples
        assert_eq!(m.state().training.len(), 4);
    }

    #[test]
    fn mission_runs_to_done_with_all_estimates() {
        let env = test_env();
        let report = run_mission(&env, 7);
        assert_eq!(report.estimates.len(), 2);
        assert_eq!(report.estimates[0].time_s, 180.0);
        assert_eq!(report.estimates[1].time_s, 420.0);
        assert!(report.total_time_s >= 420.0);
        for est in &report.estimates {
            assert!(env.rover_grid.contains(est.location));
        }
    }

    #[test]
    fn deterministic_repeat_is_identical() {
        let env = test_env();
        let a = run_mission(&env, 42);
        let b = run_mission(&env, 42);
        assert_eq!(a, b);
        assert_eq!(a.log_string(), b.log_string());
        assert_eq!(a.trajectory_csv(), b.trajectory_csv());
    }

    #[test]
    fn different_seeds_differ() {
        let env = test_env();
        let a = run_mission(&env, 1);
        let b = run_mission(&env, 2);
        assert_ne!(a.log_string(), b.log_string());
    }

    #[test]
    fn phase_transitions_all_legal() {
        let env = test_env();
        let report = run_mission(&env, 3);
        for ev in &report.events {
            if let EventDetail::PhaseChange { from, to } = ev.detail {
                assert!(legal_edge(from, to), "illegal transition {from:?} -> {to:?}");
            }
        }
    }

    #[test]
    fn clock_accounting_exact() {
        let env = test_env();
        let report = run_mission(&env, 11);
        let mut expected = 0.0;
        for ev in &report.events {
            match &ev.detail {
                EventDetail::Climb { duration_s } => expected += duration_s,
                EventDetail::Travel { distance_m, .. } => {
                    expected += distance_m / env.mission.cruise_speed_mps;
                }
                EventDetail::Sample { .. } | EventDetail::CalibrationSample { .. } => {
                    expected += env.mission.sample_duration_s;
                }
                _ => {}
            }
        }
        assert!(
            (report.total_time_s - expected).abs() < 1e-9,
            "clock {} vs recomputed {}",
            report.total_time_s,
            expected
        );
    }

    #[test]
    fn accepted_samples_sit_on_commanded_waypoints() {
        let env = test_env();
        let report = run_mission(&env, 5);
        let mut commanded: Vec<GeoPoint> = vec![env.flight_grid.clamp(env.mission.takeoff)];
        for ev in &report.events {
            match &ev.detail {
                EventDetail::Travel { to, .. } => commanded.push(*to),
                EventDetail::Target { waypoint, .. } => commanded.push(*waypoint),
                _ => {}
            }
        }
        for rec in report.records.iter().filter(|r| r.accepted) {
            assert!(
                commanded.contains(&rec.location),
                "sample at uncommanded location ({}, {})",
                rec.location.lat,
                rec.location.lon
            );
        }
    }

    #[test]
    fn zero_duration_mission_reports_prior_estimate() {
        let mut env = test_env();
        env.mission.mission_duration_s = 0.0;
        env.mission.estimate_times_s = vec![0.0];
        let report = run_mission(&env, 1);
        assert_eq!(report.estimates.len(), 1);
        // constant prior mean ties break to rover node (0, 0)
        assert_eq!(report.estimates[0].location, env.rover_grid.node(0, 0));
        assert!(report.records.is_empty());
    }

    #[test]
    fn fade_rejects_accumulate_to_max_rejects_trigger() {
        let mut env = test_env();
        let frame = LocalFrame::new(env.flight_grid.min_corner());
        // the takeoff sits at the noise floor where quality is pinned near
        // zero, so calibration stays clean at threshold 35; the startup
        // waypoints sit in the mid-quality zone near the transmitter where
        // deep fades blow up the quality variance and every window is
        // rejected
        env.channel.tx_location = frame.to_geo(150.0, 150.0);
        env.channel.tx_power_db = -45.0;
        env.channel.shadowing_std_db = 0.5;
        env.channel.fade_prob = 0.5;
        env.channel.fade_depth_db = 40.0;
        env.mission.startup_waypoints = vec![
            frame.to_geo(150.0, 115.0),
            frame.to_geo(120.0, 150.0),
            frame.to_geo(180.0, 150.0),
        ];
        env.mission.max_rejects = 3;
        let report = run_mission(&env, 9);
        assert!(report.rejected_count >= 3, "expected rejected windows");
        assert!(report.aux_circles > 0, "expected at least one aux circle");
        let first_aux = report
            .events
            .iter()
            .find(|e| matches!(e.detail, EventDetail::AuxEnter { .. }))
            .unwrap();
        assert!(matches!(
            first_aux.detail,
            EventDetail::AuxEnter {
                trigger: AuxTrigger::MaxRejects,
                ..
            }
        ));
        let enters = report
            .events
            .iter()
            .filter(|e| matches!(e.detail, EventDetail::AuxEnter { .. }))
            .count();
        assert_eq!(enters, report.aux_circles);
    }

    #[test]
    fn calibration_failsafe_skips_startup_and_circles() {
        let mut env = test_env();
        env.channel.fade_prob = 0.5;
        env.channel.fade_depth_db = 40.0;
        // low budget and no escalation room: calibration will fail
        env.filter_retake_budget = 3;
        env.filter_escalation = 1.0000001;
        let report = run_mission(&env, 13);
        let failed_cal = report.events.iter().any(|e| {
            matches!(
                e.detail,
                EventDetail::CalibrationResult {
                    accepted: false,
                    ..
                }
            )
        });
        assert!(failed_cal, "calibration should fail under heavy fading");
        // failsafe circle fires from the autonomous loop right away
        let first_aux = report
            .events
            .iter()
            .find(|e| matches!(e.detail, EventDetail::AuxEnter { .. }))
            .expect("failsafe circle expected");
        assert_eq!(
            first_aux.phase,
            Phase::AutonomousBo,
            "failsafe must route through the autonomous loop"
        );
        // no startup samples happened: the first aux entry precedes any
        // accepted training sample
        assert!(matches!(
            first_aux.detail,
            EventDetail::AuxEnter {
                trigger: AuxTrigger::MaxRejects,
                ..
            }
        ));
    }

    #[test]
    fn aux_circle_chord_spacing_matches_formula() {
        let cfg = MissionConfig {
            aux_circle_points: 8,
            aux_circle_radius_m: 50.0,
            ..MissionConfig::default()
        };
        let origin = GeoPoint::new(35.0, -78.0);
        let frame = LocalFrame::new(origin);
        let grid = GeoGrid::new(
            frame.to_geo(-500.0, -500.0),
            frame.to_geo(500.0, 500.0),
            8,
            8,
        )
        .unwrap();
        let circle = make_aux_circle(origin, &cfg, &grid);
        assert_eq!(circle.len(), 8);
        let expect_chord = 2.0 * 50.0 * (std::f64::consts::PI / 8.0).sin();
        for i in 0..circle.len() {
            let a = circle[i];
            let b = circle[(i + 1) % circle.len()];
            let d = frame.distance_m(a, b).unwrap();
            assert!(
                (d - expect_chord).abs() < 0.05,
                "chord {d} vs {expect_chord}"
            );
            // all points on the circle within projection tolerance
            let r = frame.distance_m(origin, a).unwrap();
            assert!((r - 50.0).abs() < 0.05, "radius {r}");
        }
    }

    #[test]
    fn aux_circle_clamped_at_corner() {
        let cfg = MissionConfig {
            aux_circle_points: 8,
            aux_circle_radius_m: 60.0,
            ..MissionConfig::default()
        };
        let origin = GeoPoint::new(35.0, -78.0);
        let frame = LocalFrame::new(origin);
        let grid = GeoGrid::new(origin, frame.to_geo(400.0, 400.0), 8, 8).unwrap();
        let circle = make_aux_circle(origin, &cfg, &grid);
        for p in &circle {
            assert!(grid.contains(*p));
        }
    }

    #[test]
    fn similar_points_trigger_geometry() {
        let cfg = MissionConfig {
            similar_point_count: 5,
            similar_point_radius_m: 20.0,
            max_rejects: 8,
            ..MissionConfig::default()
        };
        let origin = GeoPoint::new(35.0, -78.0);
        let frame = LocalFrame::new(origin);
        // five targets within 10 m of each other
        let tight: Vec<GeoPoint> = (0..5)
            .map(|i| frame.to_geo(2.0 * i as f64, 1.5 * i as f64))
            .collect();
        assert_eq!(
            check_aux_triggers(&tight, 0, &cfg),
            Some(AuxTrigger::SimilarPoints)
        );

        let spread: Vec<GeoPoint> = (0..5)
            .map(|i| frame.to_geo(40.0 * i as f64, 0.0))
            .collect();
        assert_eq!(check_aux_triggers(&spread, 0, &cfg), None);
        assert_eq!(
            check_aux_triggers(&spread, 8, &cfg),
            Some(AuxTrigger::MaxRejects)
        );
        // similar-points wins when both hold
        assert_eq!(
            check_aux_triggers(&tight, 8, &cfg),
            Some(AuxTrigger::SimilarPoints)
        );
    }

    #[test]
    fn estimates_always_on_rover_grid() {
        let env = test_env();
        for seed in 0..4 {
            let report = run_mission(&env, seed);
            for est in &report.estimates {
                let mut on_node = false;
                for node in env.rover_grid.nodes() {
                    if node == est.location {
                        on_node = true;
                        break;
                    }
                }
                assert!(on_node, "estimate not a rover grid node");
            }
        }
    }
}
