//! Composite covariance: constant-scaled RBF plus white noise.
//!
//! `k(x, x') = scale * exp(-||x - x'||^2 / (2 * lengthscale^2)) + noise * [x == x']`
//!
//! Distances are Euclidean in raw degree coordinates, matching the units of
//! the lengthscale and its bounds. Lat/lon degrees are anisotropic in meters;
//! that distortion is an accepted modeling simplification and is small over
//! sub-kilometer mission areas.
//!
//! Gradient ordering everywhere in this crate is `[scale, lengthscale, noise]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("hyperparameter {name} = {value} must be strictly positive and finite")]
    NonPositive { name: &'static str, value: f64 },
    #[error("bounds for {name} must satisfy 0 < lower < upper, got ({lower}, {upper})")]
    BadBounds {
        name: &'static str,
        lower: f64,
        upper: f64,
    },
}

/// Current kernel hyperparameter values.
///
/// `scale` is the variance of the scaled RBF term (dB^2), `lengthscale` is in
/// degrees, `noise` is the white-noise level (dB^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub scale: f64,
    pub lengthscale: f64,
    pub noise: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            scale: 1.0,
            lengthscale: 0.00276,
            noise: 0.33,
        }
    }
}

impl HyperParams {
    pub fn new(scale: f64, lengthscale: f64, noise: f64) -> Self {
        Self {
            scale,
            lengthscale,
            noise,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        for (name, value) in [
            ("scale", self.scale),
            ("lengthscale", self.lengthscale),
            ("noise", self.noise),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(KernelError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// Values as `[scale, lengthscale, noise]`.
    pub fn to_array(&self) -> [f64; 3] {
        [self.scale, self.lengthscale, self.noise]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Box bounds for each hyperparameter, same units as [`HyperParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub scale: (f64, f64),
    pub lengthscale: (f64, f64),
    pub noise: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            scale: (1e-3, 1e3),
            lengthscale: (0.001, 0.004),
            noise: (1e-4, 1e2),
        }
    }
}

impl HyperBounds {
    pub fn validate(&self) -> Result<(), KernelError> {
        for (name, (lower, upper)) in [
            ("scale", self.scale),
            ("lengthscale", self.lengthscale),
            ("noise", self.noise),
        ] {
            if !(lower.is_finite() && upper.is_finite() && 0.0 < lower && lower < upper) {
                return Err(KernelError::BadBounds { name, lower, upper });
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &HyperParams) -> bool {
        let [lo, hi] = self.to_arrays();
        p.to_array()
            .iter()
            .zip(lo.iter().zip(hi.iter()))
            .all(|(v, (l, h))| v >= l && v <= h)
    }

    /// Clamps each hyperparameter into its box.
    pub fn clamp(&self, p: &HyperParams) -> HyperParams {
        HyperParams::new(
            p.scale.clamp(self.scale.0, self.scale.1),
            p.lengthscale.clamp(self.lengthscale.0, self.lengthscale.1),
            p.noise.clamp(self.noise.0, self.noise.1),
        )
    }

    /// Lower and upper bounds as `[scale, lengthscale, noise]` arrays.
    pub fn to_arrays(&self) -> [[f64; 3]; 2] {
        [
            [self.scale.0, self.lengthscale.0, self.noise.0],
            [self.scale.1, self.lengthscale.1, self.noise.1],
        ]
    }
}

/// Squared Euclidean distance in degree coordinates.
pub fn sq_dist(a: GeoPoint, b: GeoPoint) -> f64 {
    let dlat = a.lat - b.lat;
    let dlon = a.lon - b.lon;
    dlat * dlat + dlon * dlon
}

/// Scaled RBF term: `scale * exp(-||a - b||^2 / (2 * lengthscale^2))`.
pub fn k_rbf(a: GeoPoint, b: GeoPoint, params: &HyperParams) -> f64 {
    let ell2 = params.lengthscale * params.lengthscale;
    params.scale * (-sq_dist(a, b) / (2.0 * ell2)).exp()
}

/// Full composite kernel; white noise contributes only on the diagonal of a
/// training matrix (`same_point` true).
pub fn k_full(a: GeoPoint, b: GeoPoint, params: &HyperParams, same_point: bool) -> f64 {
    k_rbf(a, b, params) + if same_point { params.noise } else { 0.0 }
}

/// Training covariance matrix `K[i][j] = k_full(x_i, x_j, i == j)`.
pub fn build_matrix(points: &[GeoPoint], params: &HyperParams) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.scale + params.noise;
        for j in 0..i {
            let v = k_rbf(points[i], points[j], params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Analytic partials of the training matrix, ordered `[scale, lengthscale, noise]`.
///
/// `dK/dscale = exp(-d^2 / 2 ell^2)`, `dK/dlengthscale = k_rbf * d^2 / ell^3`,
/// `dK/dnoise = I`.
pub fn matrix_grad(points: &[GeoPoint], params: &HyperParams) -> [DMatrix<f64>; 3] {
    let n = points.len();
    let ell = params.lengthscale;
    let mut d_scale = DMatrix::zeros(n, n);
    let mut d_ell = DMatrix::zeros(n, n);
    let d_noise = DMatrix::identity(n, n);
    for i in 0..n {
        d_scale[(i, i)] = 1.0;
        for j in 0..i {
            let d2 = sq_dist(points[i], points[j]);
            let rbf = k_rbf(points[i], points[j], params);
            let ds = rbf / params.scale;
            let dl = rbf * d2 / (ell * ell * ell);
            d_scale[(i, j)] = ds;
            d_scale[(j, i)] = ds;
            d_ell[(i, j)] = dl;
            d_ell[(j, i)] = dl;
        }
    }
    [d_scale, d_ell, d_noise]
}
