//! Graduated non-convexity for truncated least squares.
//!
//! The costs handled here all share one shape: trusted terms that are plain
//! squares, plus loop-closure terms wrapped in `min(r^2, c^2)`. Writing the
//! truncation with a weight per loop closure and relaxing it with a
//! parameter `mu` gives the surrogate
//!
//! ```text
//! sum_trusted r^2 + sum_lc [ w r^2 + mu (1 - w) / (mu + w) c^2 ],  w in [0, 1]
//! ```
//!
//! which is convex-like for small `mu` and tends to the truncated cost as
//! `mu` grows. Each iteration updates all weights in closed form, re-solves
//! the weighted least-squares problem, and multiplies `mu` by the
//! continuation factor.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Fallback `mu` when every residual is already well inside the threshold.
pub const SMALL_INITIAL_MU: f64 = 1e-4;
/// Lower clamp on the initial `mu`.
pub const MIN_INITIAL_MU: f64 = 1e-8;
/// Weight changes below this count as "no progress" for the stall guard.
pub const STALL_WEIGHT_CHANGE: f64 = 1e-6;
/// Consecutive no-progress iterations that end a run early.
pub const STALL_ITERATIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GncConfig {
    /// Truncation threshold `c^2`, in units of squared scaled residual.
    pub c_squared: f64,
    /// Factor applied to `mu` after every iteration.
    pub continuation_factor: f64,
    pub max_iterations: usize,
    /// A weight this close to 0 or 1 counts as decided.
    pub weight_binary_tol: f64,
}

impl GncConfig {
    pub fn new(c_squared: f64) -> Self {
        Self {
            c_squared,
            continuation_factor: 1.4,
            max_iterations: 100,
            weight_binary_tol: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_squared > 0.0 && self.c_squared.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "c_squared must be positive, got {}",
                self.c_squared
            )));
        }
        if !(self.continuation_factor > 1.0 && self.continuation_factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "continuation factor must exceed 1, got {}",
                self.continuation_factor
            )));
        }
        if !(0.0..0.5).contains(&self.weight_binary_tol) {
            return Err(Error::InvalidArgument(format!(
                "weight tolerance must lie in [0, 0.5), got {}",
                self.weight_binary_tol
            )));
        }
        Ok(())
    }
}

/// Closed-form minimizer over `w in [0, 1]` of
/// `w r^2 + mu (1 - w) / (mu + w) c^2`.
pub fn weight_update(r_squared: f64, c_squared: f64, mu: f64) -> f64 {
    if r_squared <= mu / (mu + 1.0) * c_squared {
        1.0
    } else if r_squared >= (mu + 1.0) / mu * c_squared {
        0.0
    } else {
        let w = (c_squared * mu * (mu + 1.0) / r_squared).sqrt() - mu;
        w.clamp(0.0, 1.0)
    }
}

/// Starting `mu`, chosen so the largest residual sits inside the
/// non-convex band of the first surrogate.
pub fn initialize_mu(residuals_squared: &[f64], c_squared: f64) -> f64 {
    let max_r2 = residuals_squared.iter().copied().fold(0.0, f64::max);
    let mu = if 2.0 * max_r2 > c_squared {
        c_squared / (2.0 * max_r2 - c_squared)
    } else {
        SMALL_INITIAL_MU
    };
    mu.max(MIN_INITIAL_MU)
}

/// The relaxed cost at a given `mu`.
pub fn surrogate_cost(trusted: f64, residuals_squared: &[f64], weights: &[f64], c_squared: f64, mu: f64) -> f64 {
    trusted
        + residuals_squared
            .iter()
            .zip(weights)
            .map(|(&r2, &w)| w * r2 + mu * (1.0 - w) / (mu + w) * c_squared)
            .sum::<f64>()
}

/// The truncated cost `trusted + sum min(r^2, c^2)`.
pub fn truncated_cost(trusted: f64, residuals_squared: &[f64], c_squared: f64) -> f64 {
    trusted + residuals_squared.iter().map(|&r2| r2.min(c_squared)).sum::<f64>()
}

/// A weighted least-squares problem GNC can drive.
pub trait GncProblem {
    type Solution: Clone;

    fn num_loop_closures(&self) -> usize;

    /// Exact minimizer of the trusted terms plus `w`-weighted loop-closure
    /// terms. `weights` has one entry per loop closure.
    fn solve_weighted(&mut self, weights: &[f64]) -> Result<Self::Solution>;

    /// Squared scaled residual of every loop closure at `solution`.
    fn residuals_squared(&self, solution: &Self::Solution) -> Vec<f64>;

    /// Sum of squared residuals over the trusted (never weighted) terms.
    fn trusted_cost(&self, solution: &Self::Solution) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GncIteration {
    pub iteration: usize,
    pub mu: f64,
    /// Surrogate before touching anything at this `mu`.
    pub cost_before: f64,
    /// Surrogate after the weight update, before the re-solve.
    pub cost_after_weights: f64,
    /// Surrogate after the re-solve.
    pub cost: f64,
    /// Truncated cost after the re-solve.
    pub truncated_cost: f64,
    /// Weights at or above one half.
    pub num_inlier_weights: usize,
    pub max_weight_change: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GncTrace {
    /// Least-squares cost of the all-weights-one start.
    pub initial_cost: f64,
    pub iterations: Vec<GncIteration>,
}

impl GncTrace {
    /// `iteration,mu,cost,num_inlier_weights` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,mu,cost,num_inlier_weights\n");
        for it in &self.iterations {
            let _ = writeln!(out, "{},{},{},{}", it.iteration, it.mu, it.cost, it.num_inlier_weights);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct GncOutcome<S> {
    /// Solution re-solved with the snapped weights.
    pub solution: S,
    /// Snapped weights, each exactly 0 or 1.
    pub weights: Vec<f64>,
    /// Weights of the last iteration before snapping.
    pub raw_weights: Vec<f64>,
    pub converged: bool,
    /// Ended by the stall guard.
    pub stalled: bool,
    pub trace: GncTrace,
}

impl<S> GncOutcome<S> {
    pub fn inliers(&self) -> impl Iterator<Item = bool> + '_ {
        self.weights.iter().map(|&w| w == 1.0)
    }
}

/// Runs the continuation until every weight is within
/// `weight_binary_tol` of 0 or 1 and the resulting solution reproduces
/// them, the iteration cap is hit, or the weights stop moving. The returned weights are thresholded at one half and the
/// solution is recomputed with them.
pub fn gnc_solve<P: GncProblem>(problem: &mut P, config: &GncConfig) -> Result<GncOutcome<P::Solution>> {
    config.validate()?;
    let c2 = config.c_squared;
    let m = problem.num_loop_closures();

    let mut weights = vec![1.0; m];
    let mut solution = problem.solve_weighted(&weights)?;
    let mut r2 = problem.residuals_squared(&solution);
    let mut trace = GncTrace {
        initial_cost: problem.trusted_cost(&solution) + r2.iter().sum::<f64>(),
        iterations: Vec::new(),
    };
    if m == 0 {
        return Ok(GncOutcome {
            solution,
            weights,
            raw_weights: Vec::new(),
            converged: true,
            stalled: false,
            trace,
        });
    }

    let is_binary = |w: &[f64]| {
        w.iter()
            .all(|&w| w <= config.weight_binary_tol || w >= 1.0 - config.weight_binary_tol)
    };

    let mut mu = initialize_mu(&r2, c2);
    let mut converged = false;
    let mut stalled = false;
    let mut quiet = 0;
    for iteration in 1..=config.max_iterations {
        let trusted = problem.trusted_cost(&solution);
        let cost_before = surrogate_cost(trusted, &r2, &weights, c2, mu);

        let mut max_weight_change = 0.0f64;
        for (w, &r) in weights.iter_mut().zip(&r2) {
            let next = weight_update(r, c2, mu);
            max_weight_change = max_weight_change.max((next - *w).abs());
            *w = next;
        }
        let cost_after_weights = surrogate_cost(trusted, &r2, &weights, c2, mu);

        solution = problem.solve_weighted(&weights)?;
        r2 = problem.residuals_squared(&solution);
        let trusted = problem.trusted_cost(&solution);
        trace.iterations.push(GncIteration {
            iteration,
            mu,
            cost_before,
            cost_after_weights,
            cost: surrogate_cost(trusted, &r2, &weights, c2, mu),
            truncated_cost: truncated_cost(trusted, &r2, c2),
            num_inlier_weights: weights.iter().filter(|&&w| w >= 0.5).count(),
            max_weight_change,
        });

        // At small mu every weight can be near zero just because the
        // all-inlier start fits nothing, so binary alone is not enough.
        if is_binary(&weights)
            && r2
                .iter()
                .zip(&weights)
                .all(|(&r, &w)| (weight_update(r, c2, mu) - w).abs() <= config.weight_binary_tol)
        {
            converged = true;
            break;
        }
        if max_weight_change < STALL_WEIGHT_CHANGE {
            quiet += 1;
            if quiet >= STALL_ITERATIONS {
                stalled = true;
                break;
            }
        } else {
            quiet = 0;
        }
        mu *= config.continuation_factor;
    }

    let raw_weights = weights;
    let snapped: Vec<f64> = raw_weights.iter().map(|&w| if w >= 0.5 { 1.0 } else { 0.0 }).collect();
    if snapped != raw_weights {
        solution = problem.solve_weighted(&snapped)?;
    }
    Ok(GncOutcome {
        solution,
        weights: snapped,
        raw_weights,
        converged,
        stalled,
        trace,
    })
}
