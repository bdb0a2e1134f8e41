//! Independent oracles and fixture generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Matrix2, Vector2};
use planar_gnc::{EdgeKind, PoseGraph, RelativeMeasurement, TrajectoryEstimate};
use rand::Rng;
use statrs::function::gamma::gamma_lr;

/// Inverse chi-square CDF by bisection on the regularized lower incomplete
/// gamma function.
pub fn chi2_quantile(dof: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 200.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_lr(0.5 * dof, 0.5 * mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer over `[0, 1]` of `w r2 + mu (1 - w) c2 / (mu + w)` by a dense
/// scan followed by golden-section polishing.
pub fn brute_force_weight(r2: f64, c2: f64, mu: f64) -> f64 {
    let f = |w: f64| w * r2 + mu * (1.0 - w) * c2 / (mu + w);
    let n = 20_000;
    let best = (0..=n)
        .map(|k| k as f64 / n as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let (mut a, mut b) = ((best - 1.0 / n as f64).max(0.0), (best + 1.0 / n as f64).min(1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let polished = 0.5 * (a + b);
    [best, polished, 0.0, 1.0]
        .into_iter()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap()
}

fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Coupled cost recomputed from rotation matrices, over odometry plus the
/// given loop closures.
pub fn coupled_cost(graph: &PoseGraph, keep: &BTreeSet<usize>, theta: &[f64], t: &[Vector2<f64>]) -> f64 {
    graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, e)| e.kind == EdgeKind::Odometry || keep.contains(i))
        .map(|(_, e)| {
            let (ri, rj) = (rot(theta[e.from]), rot(theta[e.to]));
            let dr = rj - ri * rot(e.dtheta.radians());
            let dt = t[e.to] - t[e.from] - ri * e.dt;
            e.kappa * dr.norm_squared() + e.tau * dt.norm_squared()
        })
        .sum()
}

pub fn estimate_cost(graph: &PoseGraph, keep: &BTreeSet<usize>, est: &TrajectoryEstimate) -> f64 {
    let theta: Vec<f64> = est.poses().iter().map(|p| p.theta.radians()).collect();
    coupled_cost(graph, keep, &theta, &est.positions())
}

struct Coupled<'a> {
    graph: &'a PoseGraph,
    keep: &'a BTreeSet<usize>,
}

impl Coupled<'_> {
    fn unpack(&self, p: &[f64]) -> (Vec<f64>, Vec<Vector2<f64>>) {
        let n = self.graph.num_vertices();
        let mut theta = vec![0.0; n];
        let mut t = vec![Vector2::zeros(); n];
        for v in 1..n {
            let b = 3 * (v - 1);
            theta[v] = p[b];
            t[v] = Vector2::new(p[b + 1], p[b + 2]);
        }
        (theta, t)
    }
}

impl CostFunction for Coupled<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let (theta, t) = self.unpack(p);
        Ok(coupled_cost(self.graph, self.keep, &theta, &t))
    }
}

/// Derivative-free minimization of the coupled cost by restarted
/// Nelder-Mead, starting from `start`. Returns the minimizer as an estimate
/// and its cost.
pub fn nelder_mead_minimize(
    graph: &PoseGraph,
    keep: &BTreeSet<usize>,
    start: &TrajectoryEstimate,
) -> (TrajectoryEstimate, f64) {
    let problem = Coupled { graph, keep };
    let mut x: Vec<f64> = start
        .poses()
        .iter()
        .skip(1)
        .flat_map(|p| [p.theta.radians(), p.t.x, p.t.y])
        .collect();
    let mut best = problem.cost(&x).unwrap();
    let mut scale = 0.5;
    for _ in 0..60 {
        let mut simplex = vec![x.clone()];
        for k in 0..x.len() {
            let mut v = x.clone();
            v[k] += scale;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-30).unwrap();
        let res = Executor::new(Coupled { graph, keep }, solver)
            .configure(|s| s.max_iters(20_000))
            .run()
            .unwrap();
        let cost = res.state.best_cost;
        let improved = best - cost;
        if cost <= best {
            x = res.state.best_param.unwrap();
            best = cost;
        }
        scale = (scale * 0.3).max(1e-7);
        if improved.abs() <= 1e-15 * best.max(1e-300) && scale <= 1e-6 {
            break;
        }
    }
    let (theta, t) = problem.unpack(&x);
    (TrajectoryEstimate::from_parts(&theta, &t).unwrap(), best)
}

fn random_measurement(rng: &mut impl Rng) -> (f64, Vector2<f64>, f64, f64) {
    (
        rng.random_range(-PI..PI),
        Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        rng.random_range(0.5..10.5),
        rng.random_range(0.5..10.5),
    )
}

/// Connected graph on `n` poses: a chain of random steps (some stored
/// backwards) plus up to `extra` random non-consecutive loop closures, with
/// random precisions.
pub fn random_graph(rng: &mut impl Rng, n: usize, extra: usize) -> PoseGraph {
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        let (th, dt, kappa, tau) = random_measurement(rng);
        let (from, to) = if rng.random::<f64>() < 0.2 { (i + 1, i) } else { (i, i + 1) };
        edges.push(RelativeMeasurement::new(from, to, th, dt, kappa, tau, EdgeKind::Odometry).unwrap());
    }
    let mut seen = BTreeSet::new();
    if n >= 3 {
        for _ in 0..extra {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i.abs_diff(j) < 2 || !seen.insert((i, j)) {
                continue;
            }
            let (th, dt, kappa, tau) = random_measurement(rng);
            edges.push(RelativeMeasurement::new(i, j, th, dt, kappa, tau, EdgeKind::LoopClosure).unwrap());
        }
    }
    PoseGraph::new(n, edges).unwrap()
}

/// Ground-truth-consistent 5-pose fixture with moderate noise and all
/// loop-closure pairs that are not consecutive.
pub fn five_pose_fixture(rng: &mut impl Rng) -> (PoseGraph, TrajectoryEstimate) {
    let n = 5;
    let mut theta = vec![0.0];
    let mut t = vec![Vector2::zeros()];
    for _ in 1..n {
        theta.push(rng.random_range(-PI..PI));
        t.push(Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let kind = if j == i + 1 { EdgeKind::Odometry } else { EdgeKind::LoopClosure };
            if kind == EdgeKind::LoopClosure && rng.random::<f64>() < 0.3 {
                continue;
            }
            let dth = theta[j] - theta[i] + rng.random_range(-0.2..0.2);
            let dt = rot(theta[i]).transpose() * (t[j] - t[i])
                + Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let kappa = rng.random_range(1.0..20.0);
            let tau = rng.random_range(1.0..20.0);
            edges.push(RelativeMeasurement::new(i, j, dth, dt, kappa, tau, kind).unwrap());
        }
    }
    let truth = TrajectoryEstimate::from_parts(&theta, &t).unwrap();
    (PoseGraph::new(n, edges).unwrap(), truth)
}
