//! End-to-end robust estimation: regularize, screen loop closures with the
//! two GNC stages, then refine the coupled cost on what survived.

mod cost;
mod refine;
mod stages;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::Serialize;

use crate::angle::rotation_matrix;
use crate::error::{Error, Result};
use crate::gnc::{gnc_solve, GncConfig, GncTrace};
use crate::graph::PoseGraph;
use crate::linear::{AngleProblem, TranslationProblem};
use crate::regularization::compute_regularization;
use crate::trajectory::TrajectoryEstimate;

pub use cost::{edge_pgo_residual_squared, evaluate_tls_pgo_cost, pgo_cost};
pub use refine::{refine_gauss_newton, RefineConfig, Refinement};

/// 0.99 quantile of the chi-square distribution with one degree of freedom.
///
/// Obtained by bisecting the regularized lower incomplete gamma function
/// `P(1/2, x/2) = 0.99`; the test suite recomputes it.
pub const CHI2_99_1DOF: f64 = 6.634896601021214;

/// 0.99 quantile of the chi-square distribution with two degrees of freedom,
/// `2 ln 100`.
pub const CHI2_99_2DOF: f64 = 9.210340371976184;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Squared threshold for the angle stage.
    pub c1_squared: f64,
    /// Squared threshold for the translation stage.
    pub c2_squared: f64,
    pub continuation_factor: f64,
    pub max_gnc_iterations: usize,
    pub weight_binary_tol: f64,
    pub refine: RefineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let gnc = GncConfig::new(CHI2_99_1DOF);
        Self {
            c1_squared: CHI2_99_1DOF,
            c2_squared: CHI2_99_2DOF,
            continuation_factor: gnc.continuation_factor,
            max_gnc_iterations: gnc.max_iterations,
            weight_binary_tol: gnc.weight_binary_tol,
            refine: RefineConfig::default(),
        }
    }
}

impl PipelineConfig {
    fn gnc(&self, c_squared: f64) -> GncConfig {
        GncConfig {
            c_squared,
            continuation_factor: self.continuation_factor,
            max_iterations: self.max_gnc_iterations,
            weight_binary_tol: self.weight_binary_tol,
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub regularization: f64,
    pub ara: f64,
    pub ta: f64,
    pub refine: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.regularization + self.ara + self.ta + self.refine
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    /// Accepted loop closures, as edge indices. Odometry is always kept.
    pub inlier_set: BTreeSet<usize>,
    pub estimate: TrajectoryEstimate,
    /// Unwrapped angles from the angle stage (before refinement).
    pub ara_angles: Vec<f64>,
    /// Snapped weights per loop closure, in `graph.loop_closures()` order.
    pub ara_weights: Vec<f64>,
    pub ta_weights: Vec<f64>,
    pub ara_trace: GncTrace,
    pub ta_trace: GncTrace,
    pub ara_converged: bool,
    pub ta_converged: bool,
    pub max_rounding_residual: f64,
    pub refinement_iterations: usize,
    pub refinement_stalled: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub timings: StageTimings,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    inlier_set: &'a BTreeSet<usize>,
    converged: bool,
    ara_converged: bool,
    ta_converged: bool,
    max_rounding_residual: f64,
    refinement_iterations: usize,
    refinement_stalled: bool,
    initial_cost: f64,
    final_cost: f64,
    timings: &'a StageTimings,
    ara_trace: &'a GncTrace,
    ta_trace: &'a GncTrace,
    estimate: Vec<String>,
}

impl PipelineReport {
    /// Both GNC stages reached binary weights.
    pub fn converged(&self) -> bool {
        self.ara_converged && self.ta_converged
    }

    /// JSON summary with the estimate as `VERTEX_SE2` records.
    pub fn to_json(&self) -> String {
        let estimate = self
            .estimate
            .poses()
            .iter()
            .enumerate()
            .map(|(i, p)| format!("VERTEX_SE2 {i} {} {} {}", p.t.x, p.t.y, p.theta.radians()))
            .collect();
        let doc = ReportJson {
            inlier_set: &self.inlier_set,
            converged: self.converged(),
            ara_converged: self.ara_converged,
            ta_converged: self.ta_converged,
            max_rounding_residual: self.max_rounding_residual,
            refinement_iterations: self.refinement_iterations,
            refinement_stalled: self.refinement_stalled,
            initial_cost: self.initial_cost,
            final_cost: self.final_cost,
            timings: &self.timings,
            ara_trace: &self.ara_trace,
            ta_trace: &self.ta_trace,
            estimate,
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

/// Non-robust solve over odometry plus the given loop closures: the linear
/// angle and translation solves restricted to those edges, then coupled
/// refinement from there.
pub fn solve_with_inliers(graph: &PoseGraph, inliers: &BTreeSet<usize>, config: &RefineConfig) -> Result<Refinement> {
    let keep: Vec<f64> = graph
        .loop_closures()
        .iter()
        .map(|e| if inliers.contains(e) { 1.0 } else { 0.0 })
        .collect();
    let reg = compute_regularization(graph);
    let theta = AngleProblem::new(graph, &reg).solve(&keep)?;
    let rotations: Vec<_> = theta.iter().map(|&th| rotation_matrix(th)).collect();
    let t = TranslationProblem::new(graph, &rotations)?.solve(&keep)?;
    let init = TrajectoryEstimate::from_parts(&theta, &t)?;
    refine_gauss_newton(graph, inliers, &init, config)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs the full robust pipeline on `graph`.
///
/// A loop closure is kept only if both the angle stage and the translation
/// stage give it weight one. The refinement starts from the two linear
/// stages re-solved on the kept edges alone.
pub fn decoupled_robust_pgo(graph: &PoseGraph, config: &PipelineConfig) -> Result<PipelineReport> {
    config.gnc(config.c1_squared).validate()?;
    config.gnc(config.c2_squared).validate()?;
    let n = graph.num_vertices();
    if n < 2 {
        return Err(Error::InvalidArgument("graph needs at least two poses".into()));
    }
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let reg = compute_regularization(graph);
    timings.regularization = secs(clock.elapsed());
    if !reg.ambiguous_edges(1e-9).is_empty() {
        warn!("regularization rounded a half-integer; affected edges are ill-posed");
    }

    let clock = Instant::now();
    let mut angles = AngleProblem::new(graph, &reg);
    let ara = gnc_solve(&mut angles, &config.gnc(config.c1_squared))?;
    timings.ara = secs(clock.elapsed());
    if !ara.converged {
        warn!("angle stage did not reach binary weights");
    }
    debug!("angle stage: {} iterations", ara.trace.iterations.len());

    let clock = Instant::now();
    let rotations: Vec<_> = ara.solution.iter().map(|&th| rotation_matrix(th)).collect();
    let mut translations = TranslationProblem::new(graph, &rotations)?;
    let ta = gnc_solve(&mut translations, &config.gnc(config.c2_squared))?;
    timings.ta = secs(clock.elapsed());
    if !ta.converged {
        warn!("translation stage did not reach binary weights");
    }

    let keep: Vec<f64> = ara
        .weights
        .iter()
        .zip(&ta.weights)
        .map(|(&a, &t)| if a == 1.0 && t == 1.0 { 1.0 } else { 0.0 })
        .collect();
    let inlier_set: BTreeSet<usize> = graph
        .loop_closures()
        .iter()
        .zip(&keep)
        .filter(|(_, &w)| w == 1.0)
        .map(|(&e, _)| e)
        .collect();
    info!("kept {} of {} loop closures", inlier_set.len(), graph.num_loop_closures());

    let clock = Instant::now();
    let refined = solve_with_inliers(graph, &inlier_set, &config.refine)?;
    timings.refine = secs(clock.elapsed());
    if refined.stalled {
        warn!("refinement stalled after {} steps", refined.iterations);
    }

    Ok(PipelineReport {
        inlier_set,
        estimate: refined.estimate,
        ara_angles: ara.solution,
        ara_weights: ara.weights,
        ta_weights: ta.weights,
        ara_trace: ara.trace,
        ta_trace: ta.trace,
        ara_converged: ara.converged,
        ta_converged: ta.converged,
        max_rounding_residual: reg.max_rounding_residual(),
        refinement_iterations: refined.iterations,
        refinement_stalled: refined.stalled,
        initial_cost: refined.initial_cost,
        final_cost: refined.final_cost,
        timings,
    })
}
