use nalgebra::Vector2;

use crate::error::Result;
use crate::gnc::GncProblem;
use crate::linear::{AngleProblem, TranslationProblem};

impl GncProblem for AngleProblem<'_> {
    type Solution = Vec<f64>;

    fn num_loop_closures(&self) -> usize {
        self.graph().num_loop_closures()
    }

    fn solve_weighted(&mut self, weights: &[f64]) -> Result<Vec<f64>> {
        self.solve(weights)
    }

    fn residuals_squared(&self, theta: &Vec<f64>) -> Vec<f64> {
        self.loop_closure_residuals_squared(theta)
    }

    fn trusted_cost(&self, theta: &Vec<f64>) -> f64 {
        self.odometry_cost(theta)
    }
}

impl GncProblem for TranslationProblem<'_> {
    type Solution = Vec<Vector2<f64>>;

    fn num_loop_closures(&self) -> usize {
        self.graph().num_loop_closures()
    }

    fn solve_weighted(&mut self, weights: &[f64]) -> Result<Vec<Vector2<f64>>> {
        self.solve(weights)
    }

    fn residuals_squared(&self, t: &Vec<Vector2<f64>>) -> Vec<f64> {
        self.loop_closure_residuals_squared(t)
    }

    fn trusted_cost(&self, t: &Vec<Vector2<f64>>) -> f64 {
        self.odometry_cost(t)
    }
}
