//! Exact Gaussian-process regression over geographic sample locations.
//!
//! The prior mean is a constant `g` (the default channel gain with no
//! signal); the covariance is the composite kernel from [`crate::kernel`].
//! Hyperparameters are chosen by maximizing the log marginal likelihood with
//! the box-constrained quasi-Newton minimizer, optimizing in log space so
//! positivity holds by construction.
//!
//! Posterior standard deviations reported here are for the *latent* function:
//! the white-noise variance stays on the training-matrix diagonal but is not
//! added back at query points, so the acquisition rewards epistemic
//! uncertainty rather than irreducible receiver noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoGrid, GeoPoint};
use crate::kernel::{self, HyperBounds, HyperParams};
use crate::optimize::{self, BoxBounds, OptError, OptOptions};

/// Diagonal jitter added before every factorization.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("training set is empty")]
    Empty,
    #[error("training set has {locations} locations but {powers} power values")]
    MismatchedLengths { locations: usize, powers: usize },
    #[error("training power at index {index} is not finite")]
    NonFinitePower { index: usize },
    #[error("kernel matrix is not positive definite even with jitter; widen the noise bounds")]
    IllConditioned,
    #[error(transparent)]
    InvalidParams(#[from] kernel::KernelError),
}

/// Sample locations and observed powers (dB), index-aligned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub locations: Vec<GeoPoint>,
    pub powers: Vec<f64>,
}

impl TrainingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, location: GeoPoint, power_db: f64) {
        self.locations.push(location);
        self.powers.push(power_db);
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.is_empty() {
            return Err(GpError::Empty);
        }
        if self.locations.len() != self.powers.len() {
            return Err(GpError::MismatchedLengths {
                locations: self.locations.len(),
                powers: self.powers.len(),
            });
        }
        if let Some(index) = self.powers.iter().position(|p| !p.is_finite()) {
            return Err(GpError::NonFinitePower { index });
        }
        Ok(())
    }
}

/// Log marginal likelihood and its gradient over `[scale, lengthscale, noise]`.
///
/// `value = -1/2 r' K^-1 r - 1/2 log|K| - n/2 log 2pi` with `r = powers - g`;
/// the gradient entries are `1/2 tr((aa' - K^-1) dK/dtheta)` with
/// `a = K^-1 r`.
pub fn log_marginal_likelihood(
    training: &TrainingSet,
    params: &HyperParams,
    g: f64,
) -> Result<(f64, [f64; 3]), GpError> {
    training.validate()?;
    params.validate()?;
    let n = training.len();
    let mut k = kernel::build_matrix(&training.locations, params);
    for i in 0..n {
        k[(i, i)] += JITTER;
    }
    let chol = k.cholesky().ok_or(GpError::IllConditioned)?;
    let r = DVector::from_iterator(n, training.powers.iter().map(|p| p - g));
    let alpha = chol.solve(&r);
    let value = -0.5 * r.dot(&alpha) - 0.5 * chol.ln_determinant()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let k_inv = chol.inverse();
    let grads = kernel::matrix_grad(&training.locations, params);
    let mut gradient = [0.0; 3];
    for (out, dk) in gradient.iter_mut().zip(grads.iter()) {
        // tr((aa' - K^-1) dK) for symmetric dK
        let mut tr = 0.0;
        for i in 0..n {
            for j in 0..n {
                tr += (alpha[i] * alpha[j] - k_inv[(i, j)]) * dk[(i, j)];
            }
        }
        *out = 0.5 * tr;
    }
    Ok((value, gradient))
}

/// Controls for [`fit`]: warm start plus `restarts` random starts drawn
/// log-uniformly inside the bounds from a dedicated seeded stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub opt: OptOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 2,
            seed: 0,
            opt: OptOptions::default(),
        }
    }
}

/// A trained GP: hyperparameters, Cholesky factor, and precomputed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedGp {
    training: TrainingSet,
    params: HyperParams,
    mean_g: f64,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    lml: f64,
}

impl FittedGp {
    /// Builds the posterior cache at fixed hyperparameters (no optimization).
    pub fn from_params(
        training: &TrainingSet,
        params: &HyperParams,
        g: f64,
    ) -> Result<Self, GpError> {
        training.validate()?;
        params.validate()?;
        let n = training.len();
        let mut k = kernel::build_matrix(&training.locations, params);
        for i in 0..n {
            k[(i, i)] += JITTER;
        }
        let chol = k.cholesky().ok_or(GpError::IllConditioned)?;
        let r = DVector::from_iterator(n, training.powers.iter().map(|p| p - g));
        let alpha = chol.solve(&r);
        let lml = -0.5 * r.dot(&alpha) - 0.5 * chol.ln_determinant()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            training: training.clone(),
            params: *params,
            mean_g: g,
            chol_l: chol.l(),
            alpha,
            lml,
        })
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn mean_g(&self) -> f64 {
        self.mean_g
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn lml(&self) -> f64 {
        self.lml
    }

    /// The cached lower-triangular Cholesky factor of `K + jitter I`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// The cached weight vector `K^-1 (powers - g)`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Posterior mean and latent standard deviation at one location.
    pub fn predict(&self, x: GeoPoint) -> (f64, f64) {
        let n = self.training.len();
        let k_star = DVector::from_iterator(
            n,
            self.training
                .locations
                .iter()
                .map(|&xi| kernel::k_rbf(x, xi, &self.params)),
        );
        let mu = self.mean_g + k_star.dot(&self.alpha);
        let v = self
            .chol_l
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor is nonsingular");
        let var = self.params.scale - v.norm_squared();
        if var < -1e-8 {
            // numerically the latent variance should never undershoot zero by
            // more than roundoff; surface it rather than hiding it
            eprintln!("gp: clamped negative posterior variance {var} at ({}, {})", x.lat, x.lon);
        }
        (mu, var.max(0.0).sqrt())
    }

    /// Posterior mean and std evaluated on every node of `grid`, row-major.
    pub fn posterior(&self, grid: &GeoGrid) -> PosteriorField {
        let mut mean = Vec::with_capacity(grid.len());
        let mut std = Vec::with_capacity(grid.len());
        for node in grid.nodes() {
            let (m, s) = self.predict(node);
            mean.push(m);
            std.push(s);
        }
        PosteriorField {
            grid: *grid,
            mean,
            std,
        }
    }
}

/// Maximizes the marginal likelihood over the bounded hyperparameter box.
///
/// One start from `init` (clamped into the bounds) plus `opts.restarts`
/// random restarts; the best optimum wins. If the kernel matrix cannot be
/// factorized at the start, the fit retries once with the noise lower bound
/// (and the initial noise) raised tenfold before giving up.
pub fn fit(
    training: &TrainingSet,
    init: &HyperParams,
    bounds: &HyperBounds,
    g: f64,
    opts: &FitOptions,
) -> Result<FittedGp, GpError> {
    training.validate()?;
    bounds.validate()?;
    init.validate()?;

    match fit_once(training, init, bounds, g, opts) {
        Ok(fitted) => Ok(fitted),
        Err(GpError::IllConditioned) => {
            // one retry with the noise lower bound raised tenfold, kept
            // strictly below the upper bound
            let raised_lower = (bounds.noise.0 * 10.0).min(bounds.noise.1 * 0.5);
            if raised_lower <= bounds.noise.0 {
                return Err(GpError::IllConditioned);
            }
            let widened = HyperBounds {
                noise: (raised_lower, bounds.noise.1),
                ..*bounds
            };
            let raised = HyperParams {
                noise: init.noise.max(widened.noise.0),
                ..*init
            };
            fit_once(training, &raised, &widened, g, opts)
        }
        Err(e) => Err(e),
    }
}

fn fit_once(
    training: &TrainingSet,
    init: &HyperParams,
    bounds: &HyperBounds,
    g: f64,
    opts: &FitOptions,
) -> Result<FittedGp, GpError> {
    let [lo, hi] = bounds.to_arrays();
    let log_bounds = BoxBounds::new(lo.iter().map(|v| v.ln()).collect(), hi.iter().map(|v| v.ln()).collect())
        .expect("validated hyperparameter bounds");

    // negated LML in log space; non-finite sentinel lets the line search back
    // away from ill-conditioned corners of the box
    let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
        let p = HyperParams::new(theta[0].exp(), theta[1].exp(), theta[2].exp());
        match log_marginal_likelihood(training, &p, g) {
            Ok((value, grad)) => {
                let glog: Vec<f64> = grad
                    .iter()
                    .zip(p.to_array().iter())
                    .map(|(d, v)| -d * v)
                    .collect();
                (-value, glog)
            }
            Err(_) => (f64::INFINITY, vec![0.0; 3]),
        }
    };

    let start = bounds.clamp(init);
    let mut starts: Vec<[f64; 3]> = vec![start.to_array().map(f64::ln)];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let mut s = [0.0; 3];
        for (i, v) in s.iter_mut().enumerate() {
            *v = rng.random_range(lo[i].ln()..hi[i].ln());
        }
        starts.push(s);
    }

    let mut best: Option<optimize::OptResult> = None;
    for s in &starts {
        match optimize::minimize(objective, &log_bounds, s, &opts.opt) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.f < b.f) {
                    best = Some(r);
                }
            }
            Err(OptError::NonFiniteStart { .. }) => continue,
            Err(_) => continue,
        }
    }
    let best = best.ok_or(GpError::IllConditioned)?;
    // exp(ln(bound)) can overshoot the box by an ulp
    let fitted_params =
        bounds.clamp(&HyperParams::new(best.x[0].exp(), best.x[1].exp(), best.x[2].exp()));
    FittedGp::from_params(training, &fitted_params, g)
}

/// GP mean and standard deviation on a grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorField {
    pub grid: GeoGrid,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PosteriorField {
    /// The prior as a field: constant mean `g`, constant std `sqrt(scale)`.
    pub fn prior(grid: &GeoGrid, params: &HyperParams, g: f64) -> Self {
        Self {
            grid: *grid,
            mean: vec![g; grid.len()],
            std: vec![params.scale.sqrt(); grid.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Row/col of the maximal mean; ties break to the lowest (row, col).
    pub fn argmax_mean_index(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.mean.iter().enumerate() {
            if *v > self.mean[best] {
                best = i;
            }
        }
        (best / self.grid.cols(), best % self.grid.cols())
    }

    /// Grid node with the maximal mean.
    pub fn argmax_mean(&self) -> GeoPoint {
        let (r, c) = self.argmax_mean_index();
        self.grid.node(r, c)
    }
}
