use std::collections::{BTreeSet, HashSet};

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::angle::{wrap, Angle, PlanarPose};
use crate::error::{Error, Result};
use crate::graph::PoseGraph;
use crate::pipeline::StageTimings;
use crate::trajectory::TrajectoryEstimate;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Position RMSE after rigid alignment.
    pub ate_pos: f64,
    /// Heading RMSE after the same alignment, degrees.
    pub ate_rot_deg: f64,
    /// Mean heading gap between the angle stage and the refined estimate, degrees.
    pub are_deg: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub timings: StageTimings,
}

/// Best rigid alignment of `estimate` onto `truth` (rotation angle and
/// translation), by the closed-form planar Procrustes solution.
fn align(estimate: &[Vector2<f64>], truth: &[Vector2<f64>]) -> (f64, Vector2<f64>) {
    let n = estimate.len() as f64;
    let ce = estimate.iter().sum::<Vector2<f64>>() / n;
    let ct = truth.iter().sum::<Vector2<f64>>() / n;
    let (mut dot, mut cross) = (0.0, 0.0);
    for (e, t) in estimate.iter().zip(truth) {
        let (a, b) = (e - ce, t - ct);
        dot += a.dot(&b);
        cross += a.x * b.y - a.y * b.x;
    }
    let phi = cross.atan2(dot);
    let (s, c) = phi.sin_cos();
    (phi, ct - Matrix2::new(c, -s, s, c) * ce)
}

/// Absolute trajectory error: `(position RMSE, heading RMSE in degrees)`
/// after the rigid motion that best maps estimated positions onto truth.
pub fn compute_ate(estimate: &TrajectoryEstimate, truth: &TrajectoryEstimate) -> Result<(f64, f64)> {
    if estimate.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "estimate has {} poses, ground truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(ate_of_poses(estimate.poses(), truth.poses()))
}

fn ate_of_poses(estimate: &[PlanarPose], truth: &[PlanarPose]) -> (f64, f64) {
    let pe: Vec<Vector2<f64>> = estimate.iter().map(|p| p.t).collect();
    let pt: Vec<Vector2<f64>> = truth.iter().map(|p| p.t).collect();
    let (phi, q) = align(&pe, &pt);
    let (s, c) = phi.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let n = pe.len() as f64;
    let pos = pe.iter().zip(&pt).map(|(e, t)| (rot * e + q - t).norm_squared()).sum::<f64>() / n;
    let ang = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| wrap(e.theta.radians() + phi - t.theta.radians()).powi(2))
        .sum::<f64>()
        / n;
    (pos.sqrt(), ang.sqrt().to_degrees())
}

/// Mean absolute heading difference in degrees, after removing the global
/// offset given by the circular mean of the differences.
pub fn compute_are(a: &[Angle], b: &[Angle]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("{} angles vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| wrap(x.radians() - y.radians())).collect();
    let offset = d.iter().map(|v| v.sin()).sum::<f64>().atan2(d.iter().map(|v| v.cos()).sum());
    let mean = d.iter().map(|&v| wrap(v - offset).abs()).sum::<f64>() / d.len() as f64;
    Ok(mean.to_degrees())
}

/// `(precision, recall)` of loop-closure rejection against the injected set.
/// With nothing rejected precision is 1; with nothing injected recall is 1.
pub fn outlier_detection_scores(graph: &PoseGraph, inliers: &BTreeSet<usize>, injected: &[usize]) -> (f64, f64) {
    let injected: HashSet<usize> = injected.iter().copied().collect();
    let rejected: Vec<usize> = graph.loop_closures().iter().copied().filter(|e| !inliers.contains(e)).collect();
    let hits = rejected.iter().filter(|e| injected.contains(e)).count() as f64;
    let precision = if rejected.is_empty() { 1.0 } else { hits / rejected.len() as f64 };
    let recall = if injected.is_empty() { 1.0 } else { hits / injected.len() as f64 };
    (precision, recall)
}
