//! Damped Gauss-Newton on the coupled pose-graph cost.
//!
//! Headings are parameterized by one real per vertex, so each edge
//! contributes a 4-vector residual: two entries for the rotation mismatch
//! (the Frobenius norm of a planar rotation difference is twice the squared
//! norm of its first column) and two for the translation.
//!
//! The residual's second derivatives only touch the heading diagonal, so the
//! exact Hessian costs nothing extra. Steps use it whenever it factors as
//! positive definite and fall back to the Gauss-Newton matrix otherwise.
//! On long chains with sparse loop closures the plain Gauss-Newton matrix
//! misses enough curvature in the soft bending modes to converge slowly.

use std::collections::BTreeSet;

use log::trace;
use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use serde::Serialize;

use crate::angle::rotation_matrix;
use crate::error::{Error, Result};
use crate::graph::PoseGraph;
use crate::linear::sparse::SparseSpd;
use crate::trajectory::TrajectoryEstimate;

const DOF: usize = 3;

type Jac = SMatrix<f64, 4, DOF>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
    pub initial_damping: f64,
    /// Give up on a step once the damping exceeds this.
    pub max_damping: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            relative_tolerance: 1e-9,
            initial_damping: 1e-6,
            max_damping: 1e10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub estimate: TrajectoryEstimate,
    /// Accepted steps.
    pub iterations: usize,
    /// No damping level produced a non-increasing step.
    pub stalled: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
}

struct EdgeTerm {
    from: usize,
    to: usize,
    dtheta: f64,
    dt: Vector2<f64>,
    sqrt_2kappa: f64,
    sqrt_tau: f64,
}

impl EdgeTerm {
    fn residual(&self, theta: &[f64], t: &[Vector2<f64>]) -> SVector<f64, 4> {
        let (ti, tj) = (theta[self.from], theta[self.to]);
        let a = ti + self.dtheta;
        let rot = self.sqrt_2kappa * Vector2::new(tj.cos() - a.cos(), tj.sin() - a.sin());
        let trans = self.sqrt_tau * (t[self.to] - t[self.from] - rotation_matrix(ti) * self.dt);
        SVector::<f64, 4>::new(rot.x, rot.y, trans.x, trans.y)
    }

    /// `sum_k r_k d^2 r_k / d theta^2` for the tail and head headings.
    fn second_order(&self, theta: &[f64], t: &[Vector2<f64>]) -> (f64, f64) {
        let (ti, tj) = (theta[self.from], theta[self.to]);
        let kappa2 = self.sqrt_2kappa * self.sqrt_2kappa;
        let rot = kappa2 * ((tj - ti - self.dtheta).cos() - 1.0);
        let lever = rotation_matrix(ti) * self.dt;
        let res = t[self.to] - t[self.from] - lever;
        (rot + self.sqrt_tau * self.sqrt_tau * res.dot(&lever), rot)
    }

    /// Jacobians with respect to `(theta, x, y)` of the tail and head poses.
    fn jacobians(&self, theta: &[f64]) -> (Jac, Jac) {
        let (ti, tj) = (theta[self.from], theta[self.to]);
        let a = ti + self.dtheta;
        let (si, ci) = ti.sin_cos();
        let d_rot = Matrix2::new(-si, -ci, ci, -si) * self.dt;
        let mut jf = Jac::zeros();
        let mut jt = Jac::zeros();
        jf[(0, 0)] = self.sqrt_2kappa * a.sin();
        jf[(1, 0)] = -self.sqrt_2kappa * a.cos();
        jf[(2, 0)] = -self.sqrt_tau * d_rot.x;
        jf[(3, 0)] = -self.sqrt_tau * d_rot.y;
        jf[(2, 1)] = -self.sqrt_tau;
        jf[(3, 2)] = -self.sqrt_tau;
        jt[(0, 0)] = -self.sqrt_2kappa * tj.sin();
        jt[(1, 0)] = self.sqrt_2kappa * tj.cos();
        jt[(2, 1)] = self.sqrt_tau;
        jt[(3, 2)] = self.sqrt_tau;
        (jf, jt)
    }
}

fn base(vertex: usize) -> Option<usize> {
    vertex.checked_sub(1).map(|v| DOF * v)
}

fn total_cost(terms: &[EdgeTerm], theta: &[f64], t: &[Vector2<f64>]) -> f64 {
    terms.iter().map(|e| e.residual(theta, t).norm_squared()).sum()
}

/// Minimizes the coupled cost over odometry plus the listed loop closures,
/// starting from `init`, with pose 0 held fixed.
pub fn refine_gauss_newton(
    graph: &PoseGraph,
    inliers: &BTreeSet<usize>,
    init: &TrajectoryEstimate,
    config: &RefineConfig,
) -> Result<Refinement> {
    let n = graph.num_vertices();
    if init.len() != n {
        return Err(Error::InvalidArgument(format!(
            "initial estimate has {} poses, graph has {n}",
            init.len()
        )));
    }
    let terms: Vec<EdgeTerm> = graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, e)| !e.is_loop_closure() || inliers.contains(i))
        .map(|(_, e)| EdgeTerm {
            from: e.from,
            to: e.to,
            dtheta: e.dtheta.radians(),
            dt: e.dt,
            sqrt_2kappa: (2.0 * e.kappa).sqrt(),
            sqrt_tau: e.tau.sqrt(),
        })
        .collect();

    let mut theta: Vec<f64> = init.poses().iter().map(|p| p.theta.radians()).collect();
    let mut t: Vec<Vector2<f64>> = init.positions();
    let initial_cost = total_cost(&terms, &theta, &t);
    // residuals around 1e-12 in length units are round-off, not signal
    let round_off = terms
        .iter()
        .map(|e| 1e-24 * (e.sqrt_2kappa.powi(2) + e.sqrt_tau.powi(2)))
        .sum::<f64>();
    let mut cost = initial_cost;

    let dim = DOF * (n - 1);
    let mut couplings = Vec::new();
    for v in 0..n - 1 {
        for a in 0..DOF {
            for b in a + 1..DOF {
                couplings.push((DOF * v + a, DOF * v + b));
            }
        }
    }
    for e in &terms {
        if let (Some(bf), Some(bt)) = (base(e.from), base(e.to)) {
            for a in 0..DOF {
                for b in 0..DOF {
                    couplings.push((bf + a, bt + b));
                }
            }
        }
    }
    let mut normal = SparseSpd::new(dim, couplings);
    let diag_slots: Vec<usize> = (0..dim).map(|k| normal.slot(k, k)).collect();

    let mut lambda = config.initial_damping;
    let mut iterations = 0;
    let mut stalled = false;
    let mut hessian = vec![0.0; normal.values_mut().len()];
    let mut gradient = vec![0.0; dim];
    let mut jacobians: Vec<(Jac, Jac)> = Vec::with_capacity(terms.len());
    let mut curvature = vec![0.0; dim];

    while iterations < config.max_iterations && cost > round_off && dim > 0 {
        hessian.fill(0.0);
        gradient.fill(0.0);
        jacobians.clear();
        curvature.fill(0.0);
        for e in &terms {
            let r = e.residual(&theta, &t);
            let (cf, ct) = e.second_order(&theta, &t);
            if let Some(b) = base(e.from) {
                curvature[b] += cf;
            }
            if let Some(b) = base(e.to) {
                curvature[b] += ct;
            }
            let (jf, jt) = e.jacobians(&theta);
            jacobians.push((jf, jt));
            let blocks = [(base(e.from), jf), (base(e.to), jt)];
            for &(ba, ja) in &blocks {
                let Some(ba) = ba else { continue };
                let g = ja.transpose() * r;
                for a in 0..DOF {
                    gradient[ba + a] += g[a];
                }
                for &(bb, jb) in &blocks {
                    let Some(bb) = bb else { continue };
                    let h = ja.transpose() * jb;
                    for a in 0..DOF {
                        for b in 0..DOF {
                            hessian[normal.slot(ba + a, bb + b)] += h[(a, b)];
                        }
                    }
                }
            }
        }

        let neg_grad: Vec<f64> = gradient.iter().map(|g| -g).collect();
        let mut newton = true;
        let accepted = loop {
            normal.values_mut().copy_from_slice(&hessian);
            for (k, &s) in diag_slots.iter().enumerate() {
                normal.values_mut()[s] *= 1.0 + lambda;
                if newton {
                    normal.values_mut()[s] += curvature[k];
                }
            }
            if normal.factor().is_err() {
                if newton {
                    newton = false;
                    continue;
                }
                lambda *= 10.0;
                if lambda > config.max_damping {
                    stalled = true;
                    break None;
                }
                continue;
            }
            let step = normal.solve(&neg_grad);

            // decrease predicted by the undamped quadratic model
            let mut predicted: f64 = -2.0 * gradient.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
            for (e, (jf, jt)) in terms.iter().zip(&jacobians) {
                let mut js = SVector::<f64, 4>::zeros();
                if let Some(b) = base(e.from) {
                    js += jf * SVector::<f64, DOF>::from_column_slice(&step[b..b + DOF]);
                }
                if let Some(b) = base(e.to) {
                    js += jt * SVector::<f64, DOF>::from_column_slice(&step[b..b + DOF]);
                }
                predicted -= js.norm_squared();
            }
            if newton {
                predicted -= curvature.iter().zip(&step).map(|(c, s)| c * s * s).sum::<f64>();
            }
            // nothing left to gain: take the step if it helps, then stop
            let negligible = predicted <= config.relative_tolerance * cost;

            let cand_theta: Vec<f64> = std::iter::once(theta[0])
                .chain((1..n).map(|v| theta[v] + step[DOF * (v - 1)]))
                .collect();
            let cand_t: Vec<Vector2<f64>> = std::iter::once(t[0])
                .chain((1..n).map(|v| {
                    let b = DOF * (v - 1);
                    t[v] + Vector2::new(step[b + 1], step[b + 2])
                }))
                .collect();
            let cand_cost = total_cost(&terms, &cand_theta, &cand_t);
            if cand_cost <= cost {
                lambda = (lambda / 10.0).max(1e-15);
                break Some((cand_theta, cand_t, cand_cost));
            }
            if negligible || cand_cost - cost <= config.relative_tolerance * cost {
                break None;
            }
            lambda *= 10.0;
            if lambda > config.max_damping {
                stalled = true;
                break None;
            }
        };

        let Some((next_theta, next_t, next_cost)) = accepted else { break };
        iterations += 1;
        trace!("refine step {iterations}: cost {next_cost:.6e}, damping {lambda:.1e}");
        let decrease = cost - next_cost;
        theta = next_theta;
        t = next_t;
        cost = next_cost;
        if decrease <= config.relative_tolerance * (cost + decrease) {
            break;
        }
    }

    Ok(Refinement {
        estimate: TrajectoryEstimate::from_parts(&theta, &t)?,
        iterations,
        stalled,
        initial_cost,
        final_cost: cost,
    })
}
