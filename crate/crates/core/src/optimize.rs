//! Box-constrained smooth minimization: gradient-projection active-set
//! identification with a limited-memory BFGS step on the free variables and a
//! projected strong-Wolfe line search (sufficient decrease plus a curvature
//! condition, falling back to the best sufficient-decrease point when the
//! projection arc clips at a bound).
//!
//! This is the bound-constrained quasi-Newton family; the exact
//! subspace-minimization variant is intentionally not implemented. Problems
//! here are tiny (three hyperparameters), so robustness beats per-iteration
//! sophistication.

use std::collections::VecDeque;

use thiserror::Error;

const ARMIJO_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.1;
const MAX_LINE_SEARCH_STEPS: usize = 60;
const CURVATURE_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("bounds must satisfy lower[i] < upper[i] and be finite (index {index}: {lower} .. {upper})")]
    BadBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("dimension mismatch: bounds have {bounds} entries, start point has {x0}")]
    DimensionMismatch { bounds: usize, x0: usize },
    #[error("objective is non-finite ({value}) at the start point")]
    NonFiniteStart { value: f64 },
}

/// Elementwise box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, OptError> {
        if lower.len() != upper.len() {
            return Err(OptError::DimensionMismatch {
                bounds: lower.len(),
                x0: upper.len(),
            });
        }
        for (i, (&l, &u)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(OptError::BadBounds {
                    index: i,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|(&v, (&l, &u))| v.clamp(l, u))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Infinity-norm tolerance on the projected gradient.
    pub grad_tol: f64,
    /// Infinity-norm tolerance on the accepted step.
    pub step_tol: f64,
    pub max_iters: usize,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            grad_tol: 1e-5,
            step_tol: 1e-9,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    /// The backtracking search could not find a finite decreasing step; the
    /// best iterate seen so far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Projected gradient `x - clamp(x - g)`; zero exactly at a box-stationary
/// point.
fn projected_gradient(x: &[f64], g: &[f64], bounds: &BoxBounds) -> Vec<f64> {
    x.iter()
        .zip(g.iter())
        .zip(bounds.lower.iter().zip(bounds.upper.iter()))
        .map(|((&xi, &gi), (&l, &u))| xi - (xi - gi).clamp(l, u))
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion for the L-BFGS direction `-H g` with initial scaling
/// `H0 = gamma I` from the most recent pair.
fn lbfgs_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y.iter()) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    let gamma = pairs
        .back()
        .map(|(s, y)| dot(s, y) / dot(y, y))
        .unwrap_or(1.0);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y), &(a, rho)) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s.iter()) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Minimizes `objective` over the box from `x0` (clamped into the box if
/// outside).
///
/// The objective returns `(value, gradient)`. A non-finite value at the start
/// is an error; non-finite values encountered during the search are treated
/// as line-search rejections.
pub fn minimize<F>(
    mut objective: F,
    bounds: &BoxBounds,
    x0: &[f64],
    opts: &OptOptions,
) -> Result<OptResult, OptError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if x0.len() != bounds.dim() {
        return Err(OptError::DimensionMismatch {
            bounds: bounds.dim(),
            x0: x0.len(),
        });
    }
    let memory = opts.memory.max(1);

    let mut x = bounds.clamp(x0);
    let (mut f, mut g) = objective(&x);
    if !f.is_finite() {
        return Err(OptError::NonFiniteStart { value: f });
    }

    let mut best_x = x.clone();
    let mut best_f = f;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(memory);

    for iter in 0..opts.max_iters {
        let pg = projected_gradient(&x, &g, bounds);
        if inf_norm(&pg) <= opts.grad_tol {
            return Ok(OptResult {
                x,
                f,
                iterations: iter,
                converged: true,
                termination: Termination::GradientTolerance,
            });
        }

        // Active variables sit exactly on a bound with the gradient pushing
        // outward; the quasi-Newton step moves only the free set.
        let active: Vec<bool> = x
            .iter()
            .zip(g.iter())
            .zip(bounds.lower.iter().zip(bounds.upper.iter()))
            .map(|((&xi, &gi), (&l, &u))| (xi <= l && gi > 0.0) || (xi >= u && gi < 0.0))
            .collect();

        let mut g_free = g.clone();
        for (gi, &a) in g_free.iter_mut().zip(active.iter()) {
            if a {
                *gi = 0.0;
            }
        }

        let mut dir = lbfgs_direction(&g_free, &pairs);
        for (di, &a) in dir.iter_mut().zip(active.iter()) {
            if a {
                *di = 0.0;
            }
        }
        // Fall back to steepest descent if the memory produced a non-descent
        // or non-finite direction.
        let descent = dot(&dir, &g);
        if !descent.is_finite() || descent >= 0.0 {
            pairs.clear();
            dir = g_free.iter().map(|&v| -v).collect();
        }

        // Projected strong-Wolfe search by bracketing and bisection.
        // Sufficient decrease (Armijo on the projected displacement) and an
        // overshot line derivative bracket from above; an undershot one
        // extends from below. Strong-Wolfe acceptance keeps s'y > 0, which
        // the quasi-Newton memory needs; if only Armijo is attainable (e.g.
        // the arc clips hard at a bound, or the bracket collapses) the best
        // sufficient-decrease point is taken and the pair may be skipped.
        let mut t = 1.0;
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut wolfe: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        let mut armijo: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..MAX_LINE_SEARCH_STEPS {
            let trial: Vec<f64> = x
                .iter()
                .zip(dir.iter())
                .zip(bounds.lower.iter().zip(bounds.upper.iter()))
                .map(|((&xi, &di), (&l, &u))| (xi + t * di).clamp(l, u))
                .collect();
            let displacement: Vec<f64> =
                trial.iter().zip(x.iter()).map(|(&a, &b)| a - b).collect();
            if inf_norm(&displacement) == 0.0 {
                break;
            }
            let (f_trial, g_trial) = objective(&trial);
            let slope = dot(&g, &displacement);
            let sufficient_decrease =
                f_trial.is_finite() && slope <= 0.0 && f_trial <= f + ARMIJO_C1 * slope;
            if !sufficient_decrease {
                hi = t;
            } else {
                if armijo.as_ref().is_none_or(|(_, fa, _)| f_trial <= *fa) {
                    armijo = Some((trial.clone(), f_trial, g_trial.clone()));
                }
                let deriv = dot(&g_trial, &displacement);
                if deriv.abs() <= WOLFE_C2 * slope.abs() {
                    wolfe = Some((trial, f_trial, g_trial));
                    break;
                }
                if deriv > 0.0 {
                    hi = t; // past the line minimum
                } else {
                    lo = t;
                }
            }
            t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * t };
            if t < 1e-20 {
                break;
            }
        }

        let Some((x_new, f_new, g_new)) = wolfe.or(armijo) else {
            return Ok(OptResult {
                x: best_x,
                f: best_f,
                iterations: iter,
                converged: false,
                termination: Termination::LineSearchFailed,
            });
        };

        let step: Vec<f64> = x_new.iter().zip(x.iter()).map(|(&a, &b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(g.iter()).map(|(&a, &b)| a - b).collect();
        let step_norm = inf_norm(&step);
        let sy = dot(&step, &y);
        if sy > CURVATURE_EPS * dot(&step, &step).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == memory {
                pairs.pop_front();
            }
            pairs.push_back((step, y));
        }

        x = x_new;
        f = f_new;
        g = g_new;
        if f < best_f {
            best_f = f;
            best_x = x.clone();
        }

        if step_norm <= opts.step_tol {
            return Ok(OptResult {
                x,
                f,
                iterations: iter + 1,
                converged: true,
                termination: Termination::StepTolerance,
            });
        }
    }

    Ok(OptResult {
        x: best_x,
        f: best_f,
        iterations: opts.max_iters,
        converged: false,
        termination: Termination::MaxIterations,
    })
}
