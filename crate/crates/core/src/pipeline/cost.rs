use crate::angle::rotation_matrix;
use crate::graph::{PoseGraph, RelativeMeasurement};
use crate::trajectory::TrajectoryEstimate;

/// `kappa |R_j - R_i R_ij|_F^2 + tau |t_j - t_i - R_i t_ij|^2` for one edge.
pub fn edge_pgo_residual_squared(e: &RelativeMeasurement, estimate: &TrajectoryEstimate) -> f64 {
    let (pi, pj) = (estimate.pose(e.from), estimate.pose(e.to));
    let ri = pi.rotation();
    let rot = pj.rotation() - ri * rotation_matrix(e.dtheta.radians());
    let trans = pj.t - pi.t - ri * e.dt;
    e.kappa * rot.norm_squared() + e.tau * trans.norm_squared()
}

/// Coupled least-squares cost over odometry plus the loop closures for
/// which `keep` returns true.
pub fn pgo_cost(graph: &PoseGraph, estimate: &TrajectoryEstimate, keep: impl Fn(usize) -> bool) -> f64 {
    graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, e)| !e.is_loop_closure() || keep(*i))
        .map(|(_, e)| edge_pgo_residual_squared(e, estimate))
        .sum()
}

/// Truncated coupled cost: odometry terms in full, every loop-closure term
/// capped at `c^2`.
pub fn evaluate_tls_pgo_cost(graph: &PoseGraph, estimate: &TrajectoryEstimate, c: f64) -> f64 {
    let c2 = c * c;
    graph
        .edges()
        .iter()
        .map(|e| {
            let r2 = edge_pgo_residual_squared(e, estimate);
            if e.is_loop_closure() {
                r2.min(c2)
            } else {
                r2
            }
        })
        .sum()
}
