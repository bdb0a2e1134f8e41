use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::graph::PoseGraph;
use crate::regularization::RegularizedAngles;

use super::{unknown, IncidenceRow, IncidenceSolver, WeightedLinearSystem};

fn check_weights(graph: &PoseGraph, lc_weights: &[f64]) -> Result<()> {
    if lc_weights.len() != graph.num_loop_closures() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} loop closures",
            lc_weights.len(),
            graph.num_loop_closures()
        )));
    }
    if let Some(w) = lc_weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::InvalidArgument(format!("weight {w} outside [0, 1]")));
    }
    Ok(())
}

/// Per-edge multiplier: 1 for odometry, the loop-closure weight otherwise.
fn edge_multipliers(graph: &PoseGraph, lc_weights: &[f64]) -> Vec<f64> {
    let mut m = vec![1.0; graph.num_edges()];
    for (&idx, &w) in graph.loop_closures().iter().zip(lc_weights) {
        m[idx] = w;
    }
    m
}

fn incidence(graph: &PoseGraph) -> impl Iterator<Item = (Option<usize>, Option<usize>)> + '_ {
    graph.edges().iter().map(|e| (unknown(e.from), unknown(e.to)))
}

/// Weighted angle least squares with fixed wrap variables:
/// `sum_e kappa_e * w_e * (theta_to - theta_from + 2 pi k_e - dtheta_e)^2`
/// with `theta_0 = 0` and `w = 1` on odometry.
#[derive(Clone, Debug)]
pub struct AngleProblem<'g> {
    graph: &'g PoseGraph,
    /// `dtheta - 2 pi k` per edge.
    target: Vec<f64>,
    solver: IncidenceSolver,
}

impl<'g> AngleProblem<'g> {
    pub fn new(graph: &'g PoseGraph, reg: &RegularizedAngles) -> Self {
        let target = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| e.dtheta.radians() - TAU * reg.k(i) as f64)
            .collect();
        let solver = IncidenceSolver::new(graph.num_vertices() - 1, incidence(graph));
        Self {
            graph,
            target,
            solver,
        }
    }

    pub fn graph(&self) -> &'g PoseGraph {
        self.graph
    }

    fn row_weights(&self, lc_weights: &[f64]) -> Vec<f64> {
        edge_multipliers(self.graph, lc_weights)
            .iter()
            .zip(self.graph.edges())
            .map(|(w, e)| w * e.kappa)
            .collect()
    }

    /// Unwrapped headings for every vertex, `theta[0] = 0`.
    pub fn solve(&mut self, lc_weights: &[f64]) -> Result<Vec<f64>> {
        check_weights(self.graph, lc_weights)?;
        let w = self.row_weights(lc_weights);
        self.solver.factor(&w)?;
        let x = self.solver.solve(&w, &self.target);
        Ok(std::iter::once(0.0).chain(x).collect())
    }

    /// Regularized residual of `edge` (not scaled by the precision).
    pub fn edge_residual(&self, theta: &[f64], edge: usize) -> f64 {
        let e = self.graph.edge(edge);
        theta[e.to] - theta[e.from] - self.target[edge]
    }

    /// `kappa * residual^2` for each loop closure.
    pub fn loop_closure_residuals_squared(&self, theta: &[f64]) -> Vec<f64> {
        self.graph
            .loop_closures()
            .iter()
            .map(|&i| self.graph.edge(i).kappa * self.edge_residual(theta, i).powi(2))
            .collect()
    }

    /// `sum kappa * residual^2` over odometry edges.
    pub fn odometry_cost(&self, theta: &[f64]) -> f64 {
        self.graph
            .odometry_chain()
            .iter()
            .map(|&i| self.graph.edge(i).kappa * self.edge_residual(theta, i).powi(2))
            .sum()
    }

    /// The same problem as an explicit system.
    pub fn system(&self, lc_weights: &[f64]) -> WeightedLinearSystem {
        let w = self.row_weights(lc_weights);
        build_system(self.graph, &w, &self.target)
    }
}

fn build_system(graph: &PoseGraph, weights: &[f64], rhs: &[f64]) -> WeightedLinearSystem {
    let rows = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| IncidenceRow {
            edge: i,
            tail: unknown(e.from),
            head: unknown(e.to),
            rhs: rhs[i],
            weight: weights[i],
        })
        .collect();
    WeightedLinearSystem {
        num_unknowns: graph.num_vertices() - 1,
        rows,
    }
}

/// Weighted translation least squares with fixed rotations:
/// `sum_e tau_e * w_e * |t_to - t_from - R_from dt_e|^2` with `t_0 = 0`.
/// The two axes share one factorization.
#[derive(Clone, Debug)]
pub struct TranslationProblem<'g> {
    graph: &'g PoseGraph,
    /// `R_from dt` per edge, split by axis.
    target_x: Vec<f64>,
    target_y: Vec<f64>,
    solver: IncidenceSolver,
}

impl<'g> TranslationProblem<'g> {
    pub fn new(graph: &'g PoseGraph, rotations: &[Matrix2<f64>]) -> Result<Self> {
        if rotations.len() != graph.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "{} rotations for {} vertices",
                rotations.len(),
                graph.num_vertices()
            )));
        }
        let (target_x, target_y) = graph
            .edges()
            .iter()
            .map(|e| {
                let v = rotations[e.from] * e.dt;
                (v.x, v.y)
            })
            .unzip();
        let solver = IncidenceSolver::new(graph.num_vertices() - 1, incidence(graph));
        Ok(Self {
            graph,
            target_x,
            target_y,
            solver,
        })
    }

    pub fn graph(&self) -> &'g PoseGraph {
        self.graph
    }

    fn row_weights(&self, lc_weights: &[f64]) -> Vec<f64> {
        edge_multipliers(self.graph, lc_weights)
            .iter()
            .zip(self.graph.edges())
            .map(|(w, e)| w * e.tau)
            .collect()
    }

    /// Positions for every vertex, `t[0] = 0`.
    pub fn solve(&mut self, lc_weights: &[f64]) -> Result<Vec<Vector2<f64>>> {
        check_weights(self.graph, lc_weights)?;
        let w = self.row_weights(lc_weights);
        self.solver.factor(&w)?;
        let x = self.solver.solve(&w, &self.target_x);
        let y = self.solver.solve(&w, &self.target_y);
        Ok(std::iter::once(Vector2::zeros())
            .chain(x.into_iter().zip(y).map(|(a, b)| Vector2::new(a, b)))
            .collect())
    }

    pub fn edge_residual(&self, t: &[Vector2<f64>], edge: usize) -> Vector2<f64> {
        let e = self.graph.edge(edge);
        t[e.to] - t[e.from] - Vector2::new(self.target_x[edge], self.target_y[edge])
    }

    /// `tau * |residual|^2` for each loop closure.
    pub fn loop_closure_residuals_squared(&self, t: &[Vector2<f64>]) -> Vec<f64> {
        self.graph
            .loop_closures()
            .iter()
            .map(|&i| self.graph.edge(i).tau * self.edge_residual(t, i).norm_squared())
            .collect()
    }

    pub fn odometry_cost(&self, t: &[Vector2<f64>]) -> f64 {
        self.graph
            .odometry_chain()
            .iter()
            .map(|&i| self.graph.edge(i).tau * self.edge_residual(t, i).norm_squared())
            .sum()
    }

    /// The x and y systems.
    pub fn systems(&self, lc_weights: &[f64]) -> [WeightedLinearSystem; 2] {
        let w = self.row_weights(lc_weights);
        [
            build_system(self.graph, &w, &self.target_x),
            build_system(self.graph, &w, &self.target_y),
        ]
    }
}

/// One-shot angle solve. `lc_weights` is aligned with
/// [`PoseGraph::loop_closures`].
pub fn solve_angles(graph: &PoseGraph, reg: &RegularizedAngles, lc_weights: &[f64]) -> Result<Vec<f64>> {
    AngleProblem::new(graph, reg).solve(lc_weights)
}

/// One-shot translation solve with fixed per-vertex rotations.
pub fn solve_translations(
    graph: &PoseGraph,
    rotations: &[Matrix2<f64>],
    lc_weights: &[f64],
) -> Result<Vec<Vector2<f64>>> {
    TranslationProblem::new(graph, rotations)?.solve(lc_weights)
}

pub fn angle_system(graph: &PoseGraph, reg: &RegularizedAngles, lc_weights: &[f64]) -> Result<WeightedLinearSystem> {
    check_weights(graph, lc_weights)?;
    Ok(AngleProblem::new(graph, reg).system(lc_weights))
}

pub fn translation_systems(
    graph: &PoseGraph,
    rotations: &[Matrix2<f64>],
    lc_weights: &[f64],
) -> Result<[WeightedLinearSystem; 2]> {
    check_weights(graph, lc_weights)?;
    Ok(TranslationProblem::new(graph, rotations)?.systems(lc_weights))
}
