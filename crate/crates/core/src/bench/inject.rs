use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{wrap, PlanarPose};
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, PoseGraph, RelativeMeasurement};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    /// Fraction of all loop closures, after injection, that are outliers.
    pub outlier_rate: f64,
    pub rng_seed: u64,
}

impl InjectionSpec {
    /// Outliers needed so that `injected / (injected + true)` hits the rate.
    pub fn count_for(&self, true_loop_closures: usize) -> usize {
        let r = self.outlier_rate;
        (r / (1.0 - r) * true_loop_closures as f64).round() as usize
    }
}

/// Poses obtained by composing the odometry chain from the identity.
pub fn dead_reckoning(graph: &PoseGraph) -> Vec<PlanarPose> {
    let mut poses = vec![PlanarPose::IDENTITY];
    for m in 0..graph.num_vertices() - 1 {
        let e = graph.edge(graph.odometry_edge(m));
        let step = PlanarPose { theta: e.dtheta, t: e.dt };
        let step = if e.from == m { step } else { step.inverse() };
        poses.push(poses[m].compose(&step));
    }
    poses
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pair_key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// Appends random loop closures between unrelated poses.
///
/// Endpoints are distinct pose pairs that are neither consecutive nor
/// already joined by a loop closure. Headings are uniform on the circle;
/// translations are uniform in a box spanning the dead-reckoned extent in
/// each direction. Precisions are the medians over the existing loop
/// closures. Returns the new graph and the indices of the added edges,
/// which come after all original edges.
pub fn inject_outliers(graph: &PoseGraph, spec: &InjectionSpec) -> Result<(PoseGraph, Vec<usize>)> {
    let rate = spec.outlier_rate;
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("outlier rate {rate} not in [0, 1)")));
    }
    let n = graph.num_vertices();
    if n < 2 {
        return Err(Error::InvalidArgument("graph needs at least two poses".into()));
    }
    let count = spec.count_for(graph.num_loop_closures());
    if count == 0 {
        return Ok((graph.clone(), Vec::new()));
    }

    let mut taken: HashSet<(usize, usize)> = graph
        .loop_closures()
        .iter()
        .map(|&e| pair_key(graph.edge(e).from, graph.edge(e).to))
        .collect();
    let total_pairs = n * (n - 1) / 2 - (n - 1);
    let available = total_pairs.saturating_sub(taken.len());
    if count > available {
        return Err(Error::InvalidArgument(format!(
            "cannot inject {count} outliers: only {available} free pose pairs"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut pairs = Vec::with_capacity(count);
    if 2 * count <= available {
        while pairs.len() < count {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i.abs_diff(j) > 1 && taken.insert(pair_key(i, j)) {
                pairs.push((i, j));
            }
        }
    } else {
        let mut free: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 2..n).map(move |j| (i, j)))
            .filter(|p| !taken.contains(p))
            .collect();
        free.shuffle(&mut rng);
        free.truncate(count);
        pairs = free;
    }

    let reckoned = dead_reckoning(graph);
    let (lo, hi) = reckoned.iter().fold(
        (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(&p.t), hi.sup(&p.t)),
    );
    let extent = hi - lo;
    let fallback = extent.max().max(1.0);
    let half_w = if extent.x > 0.0 { extent.x } else { fallback };
    let half_h = if extent.y > 0.0 { extent.y } else { fallback };
    let lc = graph.loop_closures();
    let kappa = median(lc.iter().map(|&e| graph.edge(e).kappa).collect());
    let tau = median(lc.iter().map(|&e| graph.edge(e).tau).collect());

    let mut extra = Vec::with_capacity(count);
    for (i, j) in pairs {
        let theta = wrap(rng.random_range(-PI..PI));
        let dt = Vector2::new(rng.random_range(-half_w..=half_w), rng.random_range(-half_h..=half_h));
        extra.push(RelativeMeasurement::new(i, j, theta, dt, kappa, tau, EdgeKind::LoopClosure)?);
    }
    let first = graph.num_edges();
    let injected = (first..first + count).collect();
    Ok((graph.with_added_edges(extra)?, injected))
}
