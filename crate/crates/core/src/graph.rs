//! Pose-graph data model.
//!
//! Vertex 0 is the gauge anchor. Odometry edges must form the chain
//! `(m, m+1)` for every `m`, which doubles as the spanning tree used by
//! [`crate::regularization`]. All other edges are loop closures, the only
//! class that is ever down-weighted.

use std::collections::HashSet;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::angle::{canonicalize_angle, Angle};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Odometry,
    LoopClosure,
}

/// Relative pose of `to` seen from `from`, with isotropic rotational and
/// translational precisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeMeasurement {
    pub from: usize,
    pub to: usize,
    pub dtheta: Angle,
    pub dt: Vector2<f64>,
    /// Rotational concentration.
    pub kappa: f64,
    /// Translational precision.
    pub tau: f64,
    pub kind: EdgeKind,
}

impl RelativeMeasurement {
    pub fn new(
        from: usize,
        to: usize,
        dtheta: f64,
        dt: Vector2<f64>,
        kappa: f64,
        tau: f64,
        kind: EdgeKind,
    ) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "edge ({from}, {to}): kappa must be positive and finite, got {kappa}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "edge ({from}, {to}): tau must be positive and finite, got {tau}"
            )));
        }
        if !dt.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "edge ({from}, {to}): translation must be finite"
            )));
        }
        Ok(Self {
            from,
            to,
            dtheta: canonicalize_angle(dtheta)?,
            dt,
            kappa,
            tau,
            kind,
        })
    }

    pub fn is_loop_closure(&self) -> bool {
        self.kind == EdgeKind::LoopClosure
    }
}

/// A validated pose graph. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraph {
    num_vertices: usize,
    edges: Vec<RelativeMeasurement>,
    /// `chain[m]` is the edge index of the odometry edge between `m` and `m+1`.
    chain: Vec<usize>,
    loop_closures: Vec<usize>,
}

impl PoseGraph {
    /// Validates the structural invariants: endpoints in range, no self
    /// loops, exactly one odometry edge per consecutive pair, no repeated
    /// loop closure, and connectivity.
    pub fn new(num_vertices: usize, edges: Vec<RelativeMeasurement>) -> Result<Self> {
        if num_vertices == 0 {
            return Err(Error::Validation("graph has no vertices".into()));
        }
        let mut chain = vec![usize::MAX; num_vertices - 1];
        let mut loop_closures = Vec::new();
        let mut seen_lc = HashSet::new();
        for (idx, e) in edges.iter().enumerate() {
            if e.from >= num_vertices || e.to >= num_vertices {
                return Err(Error::Validation(format!(
                    "edge {idx} ({}, {}) references a vertex outside 0..{num_vertices}",
                    e.from, e.to
                )));
            }
            if e.from == e.to {
                return Err(Error::Validation(format!("edge {idx} is a self loop on {}", e.from)));
            }
            match e.kind {
                EdgeKind::Odometry => {
                    let lo = e.from.min(e.to);
                    if e.from.abs_diff(e.to) != 1 {
                        return Err(Error::Validation(format!(
                            "odometry edge {idx} ({}, {}) does not join consecutive poses",
                            e.from, e.to
                        )));
                    }
                    if chain[lo] != usize::MAX {
                        return Err(Error::Validation(format!(
                            "duplicate odometry edge between {lo} and {}",
                            lo + 1
                        )));
                    }
                    chain[lo] = idx;
                }
                EdgeKind::LoopClosure => {
                    if !seen_lc.insert((e.from, e.to)) {
                        return Err(Error::Validation(format!(
                            "duplicate loop closure ({}, {})",
                            e.from, e.to
                        )));
                    }
                    loop_closures.push(idx);
                }
            }
        }

        if !is_connected(num_vertices, &edges) {
            return Err(Error::Validation("graph is disconnected".into()));
        }
        if let Some(gap) = chain.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Validation(format!(
                "missing odometry edge between {gap} and {}",
                gap + 1
            )));
        }

        Ok(Self {
            num_vertices,
            edges,
            chain,
            loop_closures,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Index of the anchored vertex; always 0.
    pub fn anchor(&self) -> usize {
        0
    }

    pub fn edges(&self) -> &[RelativeMeasurement] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &RelativeMeasurement {
        &self.edges[idx]
    }

    /// Edge indices of the loop closures, in edge order. Per-loop-closure
    /// weight vectors throughout the crate are aligned with this slice.
    pub fn loop_closures(&self) -> &[usize] {
        &self.loop_closures
    }

    pub fn num_loop_closures(&self) -> usize {
        self.loop_closures.len()
    }

    /// Edge index of the odometry edge joining `m` and `m + 1`.
    pub fn odometry_edge(&self, m: usize) -> usize {
        self.chain[m]
    }

    /// Odometry edge indices ordered along the chain.
    pub fn odometry_chain(&self) -> &[usize] {
        &self.chain
    }

    /// A new graph with the given extra edges appended.
    pub fn with_added_edges(&self, extra: Vec<RelativeMeasurement>) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.extend(extra);
        Self::new(self.num_vertices, edges)
    }

    /// A new graph without the given loop closures. Indices of the surviving
    /// edges shift down accordingly.
    pub fn without_edges(&self, removed: &HashSet<usize>) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(_, e)| e.clone())
            .collect();
        Self::new(self.num_vertices, edges)
    }
}

fn is_connected(n: usize, edges: &[RelativeMeasurement]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.from].push(e.to);
        adj[e.to].push(e.from);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}
