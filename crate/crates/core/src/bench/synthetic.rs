use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::angle::{wrap, PlanarPose};
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, PoseGraph, RelativeMeasurement};
use crate::trajectory::TrajectoryEstimate;

/// Noise level whose precision stands in when a noise std is zero.
pub const NOMINAL_SIGMA: f64 = 1e-6;

/// Loop-closure candidates are pose pairs at most this many steps apart.
const NEAR_FACTOR: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layout {
    /// Serpentine sweep over a `rows x cols` lattice.
    Grid { rows: usize, cols: usize, step: f64 },
    /// Lattice walk that goes straight or turns by a right angle at each pose.
    RandomWalk { n: usize, step: f64 },
}

impl Layout {
    pub fn num_poses(&self) -> usize {
        match *self {
            Layout::Grid { rows, cols, .. } => rows * cols,
            Layout::RandomWalk { n, .. } => n,
        }
    }

    pub fn step(&self) -> f64 {
        match *self {
            Layout::Grid { step, .. } | Layout::RandomWalk { step, .. } => step,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub layout: Layout,
    /// Std of the heading noise, radians.
    pub sigma_theta: f64,
    /// Std of the translation noise per axis.
    pub sigma_t: f64,
    pub loop_closure_probability: f64,
    pub rng_seed: u64,
}

impl SyntheticSpec {
    pub fn new(layout: Layout, sigma_theta: f64, sigma_t: f64, loop_closure_probability: f64, rng_seed: u64) -> Self {
        Self {
            layout,
            sigma_theta,
            sigma_t,
            loop_closure_probability,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layout.num_poses();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("layout has {n} poses, need at least 2")));
        }
        let step = self.layout.step();
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
        }
        for (name, s) in [("sigma_theta", self.sigma_theta), ("sigma_t", self.sigma_t)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {s}")));
            }
        }
        let p = self.loop_closure_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("loop closure probability {p} not in [0, 1]")));
        }
        Ok(())
    }

    /// Precisions `(kappa, tau)` attached to every generated edge.
    pub fn precisions(&self) -> (f64, f64) {
        let precision = |s: f64| {
            let s = if s > 0.0 { s } else { NOMINAL_SIGMA };
            1.0 / (s * s)
        };
        (precision(self.sigma_theta), precision(self.sigma_t))
    }
}

fn layout_poses(layout: &Layout, rng: &mut ChaCha8Rng) -> Vec<(f64, Vector2<f64>)> {
    let step = layout.step();
    let positions: Vec<Vector2<f64>> = match *layout {
        Layout::Grid { rows, cols, .. } => (0..rows)
            .flat_map(|r| {
                (0..cols).map(move |c| {
                    let c = if r % 2 == 0 { c } else { cols - 1 - c };
                    Vector2::new(c as f64 * step, r as f64 * step)
                })
            })
            .collect(),
        Layout::RandomWalk { n, .. } => {
            let mut heading = 0.0f64;
            let mut p = Vector2::zeros();
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(p);
                p += step * Vector2::new(heading.cos().round(), heading.sin().round());
                heading += FRAC_PI_2 * rng.random_range(-1i32..=1) as f64;
            }
            out
        }
    };
    let mut poses = Vec::with_capacity(positions.len());
    let mut heading = 0.0;
    for (i, p) in positions.iter().enumerate() {
        if let Some(next) = positions.get(i + 1) {
            let d = next - p;
            heading = d.y.atan2(d.x);
        }
        poses.push((heading, *p));
    }
    poses
}

/// Non-consecutive pairs `(i, j)`, `i < j`, at most `radius` apart, sorted.
fn near_pairs(positions: &[Vector2<f64>], radius: f64) -> Vec<(usize, usize)> {
    let cell = |p: &Vector2<f64>| ((p.x / radius).floor() as i64, (p.y / radius).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in positions.iter().enumerate() {
        buckets.entry(cell(p)).or_default().push(i);
    }
    let tol = radius * (1.0 + 1e-9);
    let mut pairs = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = buckets.get(&(cx + dx, cy + dy)) else { continue };
                for &j in bucket {
                    if j > i + 1 && (positions[j] - p).norm() <= tol {
                        pairs.push((i, j));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Generates a pose graph and its anchored ground truth.
///
/// Every measurement is the true relative pose plus Gaussian noise on the
/// heading and on each translation axis (in the frame of the tail pose).
/// The output depends only on the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(PoseGraph, TrajectoryEstimate)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let raw: Vec<PlanarPose> = layout_poses(&spec.layout, &mut rng)
        .into_iter()
        .map(|(th, p)| PlanarPose::new(th, p.x, p.y))
        .collect::<Result<_>>()?;
    let truth = TrajectoryEstimate::anchored(&raw)?;
    let poses = truth.poses();
    let (kappa, tau) = spec.precisions();

    let measure = |i: usize, j: usize, kind: EdgeKind, rng: &mut ChaCha8Rng| {
        let (pi, pj) = (&poses[i], &poses[j]);
        let n_theta: f64 = rng.sample(StandardNormal);
        let n_x: f64 = rng.sample(StandardNormal);
        let n_y: f64 = rng.sample(StandardNormal);
        let dtheta = wrap(pj.theta.radians() - pi.theta.radians() + spec.sigma_theta * n_theta);
        let dt = pi.rotation().transpose() * (pj.t - pi.t) + spec.sigma_t * Vector2::new(n_x, n_y);
        RelativeMeasurement::new(i, j, dtheta, dt, kappa, tau, kind)
    };

    let n = poses.len();
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        edges.push(measure(i, i + 1, EdgeKind::Odometry, &mut rng)?);
    }
    let positions = truth.positions();
    for (i, j) in near_pairs(&positions, NEAR_FACTOR * spec.layout.step()) {
        if rng.random::<f64>() < spec.loop_closure_probability {
            edges.push(measure(i, j, EdgeKind::LoopClosure, &mut rng)?);
        }
    }
    Ok((PoseGraph::new(n, edges)?, truth))
}
