//! Integer wrap-around variables for the linear angle formulation.
//!
//! Measured relative headings live on (-pi, pi], while the unknown headings
//! are unwrapped reals. Each edge gets an integer `k` so that the residual
//! `theta_to - theta_from + 2 pi k - dtheta` is small. The odometry chain is
//! used as the spanning tree: its edges keep `k = 0`, and each loop closure
//! closes exactly one fundamental cycle whose measured angles must sum to a
//! whole number of turns. Rounding that number gives `k`.

use std::f64::consts::TAU;

use crate::graph::PoseGraph;

#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedAngles {
    k: Vec<i64>,
    residual_before_round: Vec<f64>,
}

impl RegularizedAngles {
    /// Assembles an assignment by hand. Both vectors are indexed by edge.
    pub fn from_parts(k: Vec<i64>, residual_before_round: Vec<f64>) -> Self {
        assert_eq!(k.len(), residual_before_round.len());
        Self {
            k,
            residual_before_round,
        }
    }

    /// All-zero assignment for a graph with `num_edges` edges.
    pub fn zeros(num_edges: usize) -> Self {
        Self::from_parts(vec![0; num_edges], vec![0.0; num_edges])
    }

    pub fn k(&self, edge: usize) -> i64 {
        self.k[edge]
    }

    pub fn all_k(&self) -> &[i64] {
        &self.k
    }

    /// The real-valued cycle-closure count before rounding.
    pub fn residual_before_round(&self, edge: usize) -> f64 {
        self.residual_before_round[edge]
    }

    /// Largest distance between a pre-rounding value and its integer. Values
    /// approaching 0.5 mean the cycle noise is close to half a turn and the
    /// rounding may have picked the wrong integer.
    pub fn max_rounding_residual(&self) -> f64 {
        self.residual_before_round
            .iter()
            .zip(&self.k)
            .map(|(&r, &k)| (r - k as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Edges whose pre-rounding value lies within `margin` of a half integer.
    pub fn ambiguous_edges(&self, margin: f64) -> Vec<usize> {
        self.residual_before_round
            .iter()
            .zip(&self.k)
            .enumerate()
            .filter(|(_, (&r, &k))| (r - k as f64).abs() >= 0.5 - margin)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Unwrapped chain headings: `out[m]` is the sum of the odometry angle
/// measurements from vertex 0 to vertex `m`, taken in the direction of
/// travel.
pub fn unwrapped_chain_angles(graph: &PoseGraph) -> Vec<f64> {
    let mut out = Vec::with_capacity(graph.num_vertices());
    let mut acc = 0.0;
    out.push(acc);
    for (m, &idx) in graph.odometry_chain().iter().enumerate() {
        let e = graph.edge(idx);
        let step = e.dtheta.radians();
        acc += if e.from == m { step } else { -step };
        out.push(acc);
    }
    out
}

/// Rounds each loop closure's fundamental-cycle sum to a whole number of
/// turns. Ties round away from zero; see
/// [`RegularizedAngles::ambiguous_edges`].
pub fn compute_regularization(graph: &PoseGraph) -> RegularizedAngles {
    let prefix = unwrapped_chain_angles(graph);
    let mut k = vec![0; graph.num_edges()];
    let mut before = vec![0.0; graph.num_edges()];
    for &idx in graph.loop_closures() {
        let e = graph.edge(idx);
        let path = prefix[e.to] - prefix[e.from];
        let turns = (e.dtheta.radians() - path) / TAU;
        before[idx] = turns;
        k[idx] = turns.round() as i64;
    }
    RegularizedAngles::from_parts(k, before)
}

/// `theta[to] - theta[from] + 2 pi k - dtheta` for edge `idx`.
pub fn regularized_residual(graph: &PoseGraph, reg: &RegularizedAngles, theta: &[f64], idx: usize) -> f64 {
    let e = graph.edge(idx);
    theta[e.to] - theta[e.from] + TAU * reg.k(idx) as f64 - e.dtheta.radians()
}
