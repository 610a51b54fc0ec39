//! UCB acquisition over the flight grid: `ucb(x) = mu(x) + beta * sigma(x)`
//! with an exponentially decaying exploration weight `beta = decay^s`, where
//! `s` counts *accepted* samples (rejected samples do not reduce
//! exploration).

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;
use crate::gp::PosteriorField;

/// Exploration schedule `beta_s = decay^s` with `0 < decay < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbSchedule {
    pub decay: f64,
    pub accepted: usize,
}

impl UcbSchedule {
    pub fn new(decay: f64) -> Self {
        debug_assert!(decay > 0.0 && decay < 1.0);
        Self { decay, accepted: 0 }
    }

    /// Current exploration weight `decay^accepted`.
    pub fn beta(&self) -> f64 {
        self.decay.powi(self.accepted as i32)
    }

    pub fn record_accepted(&mut self) {
        self.accepted += 1;
    }
}

/// Element-wise `mean + beta * std` over the field, row-major.
pub fn ucb_field(field: &PosteriorField, beta: f64) -> Vec<f64> {
    field
        .mean
        .iter()
        .zip(field.std.iter())
        .map(|(m, s)| m + beta * s)
        .collect()
}

/// Grid node maximizing the UCB; ties break to the lowest (row, col).
///
/// `field` must have been computed on the flight grid; the returned point is
/// one of its nodes and therefore inside the flight boundary.
pub fn next_waypoint(field: &PosteriorField, schedule: &UcbSchedule) -> GeoPoint {
    let ucb = ucb_field(field, schedule.beta());
    let mut best = 0;
    for (i, v) in ucb.iter().enumerate() {
        if *v > ucb[best] {
            best = i;
        }
    }
    field.grid.node_at(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoGrid;
    use crate::gp::{fit, FitOptions, TrainingSet};
    use crate::kernel::{HyperBounds, HyperParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GeoGrid {
        GeoGrid::new(
            GeoPoint::new(35.0, -78.0),
            GeoPoint::new(35.004, -77.994),
            10,
            10,
        )
        .unwrap()
    }

    fn mid_mission_field() -> PosteriorField {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = TrainingSet::new();
        for _ in 0..12 {
            t.push(
                GeoPoint::new(
                    35.0 + rng.random_range(0.0..0.004),
                    -78.0 + rng.random_range(0.0..0.006),
                ),
                -85.0 + rng.random_range(0.0..25.0),
            );
        }
        let gp = fit(
            &t,
            &HyperParams::default(),
            &HyperBounds::default(),
            -85.0,
            &FitOptions::default(),
        )
        .unwrap();
        gp.posterior(&grid())
    }

    #[test]
    fn beta_values() {
        let mut s = UcbSchedule::new(0.9);
        assert_eq!(s.beta(), 1.0);
        s.accepted = 3;
        assert!((s.beta() - 0.729).abs() < 1e-12);
        s.accepted = 2000;
        assert!(s.beta() >= 0.0 && s.beta() < 1e-90);
    }

    #[test]
    fn ucb_limits() {
        let field = mid_mission_field();
        assert_eq!(ucb_field(&field, 0.0), field.mean);

        let zero_mean = PosteriorField {
            grid: field.grid,
            mean: vec![0.0; field.len()],
            std: field.std.clone(),
        };
        assert_eq!(ucb_field(&zero_mean, 1.0), field.std);
    }

    #[test]
    fn ucb_matches_scalar_loop() {
        let field = mid_mission_field();
        let beta = 0.5;
        let got = ucb_field(&field, beta);
        for i in 0..field.len() {
            assert_eq!(got[i], field.mean[i] + beta * field.std[i]);
        }
    }

    #[test]
    fn waypoint_beta_zero_is_mean_argmax() {
        let field = mid_mission_field();
        let s = UcbSchedule {
            decay: 0.95,
            accepted: 10_000,
        };
        assert_eq!(next_waypoint(&field, &s), field.argmax_mean());
    }

    #[test]
    fn waypoint_huge_beta_is_std_argmax() {
        let field = mid_mission_field();
        // emulate a huge beta by overriding decay^0 scaling below
        let ucb = ucb_field(&field, 1e6);
        let mut best_ucb = 0;
        for (i, v) in ucb.iter().enumerate() {
            if *v > ucb[best_ucb] {
                best_ucb = i;
            }
        }
        let mut best_std = 0;
        for (i, v) in field.std.iter().enumerate() {
            if *v > field.std[best_std] {
                best_std = i;
            }
        }
        assert_eq!(best_ucb, best_std);
    }

    #[test]
    fn waypoint_matches_full_scan() {
        let field = mid_mission_field();
        let s = UcbSchedule {
            decay: 0.95,
            accepted: 4,
        };
        let wp = next_waypoint(&field, &s);
        let beta = s.beta();
        let mut best = f64::NEG_INFINITY;
        let mut best_node = field.grid.node(0, 0);
        for (i, node) in field.grid.nodes().enumerate() {
            let v = field.mean[i] + beta * field.std[i];
            if v > best {
                best = v;
                best_node = node;
            }
        }
        assert_eq!(wp, best_node);
        assert!(field.grid.contains(wp));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// beta_s = decay^s exactly, and is non-increasing in s.
            #[test]
            fn beta_exact_and_monotone(decay in 0.01..0.999_f64, s in 0..200_usize) {
                let sched = UcbSchedule { decay, accepted: s };
                prop_assert_eq!(sched.beta(), decay.powi(s as i32));
                let next = UcbSchedule { decay, accepted: s + 1 };
                prop_assert!(next.beta() <= sched.beta());
                prop_assert!(sched.beta() >= 0.0);
            }

            /// Adding a constant to the mean shifts UCB by that constant and
            /// leaves the waypoint unchanged.
            #[test]
            fn shift_covariance(c in -50.0..50.0_f64, accepted in 0..20_usize) {
                let field = mid_mission_field();
                let shifted = PosteriorField {
                    grid: field.grid,
                    mean: field.mean.iter().map(|m| m + c).collect(),
                    std: field.std.clone(),
                };
                let s = UcbSchedule { decay: 0.95, accepted };
                let beta = s.beta();
                let base = ucb_field(&field, beta);
                let moved = ucb_field(&shifted, beta);
                for i in 0..base.len() {
                    prop_assert!((moved[i] - base[i] - c).abs() < 1e-9);
                }
                prop_assert_eq!(next_waypoint(&field, &s), next_waypoint(&shifted, &s));
            }

            /// UCB at a fixed node is non-decreasing in beta.
            #[test]
            fn monotone_in_beta(b1 in 0.0..10.0_f64, b2 in 0.0..10.0_f64) {
                let field = mid_mission_field();
                let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
                let f_lo = ucb_field(&field, lo);
                let f_hi = ucb_field(&field, hi);
                for i in 0..field.len() {
                    prop_assert!(f_hi[i] >= f_lo[i] - 1e-12);
                }
            }
        }
    }
}
