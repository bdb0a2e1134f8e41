use crate::error::{Error, Result};

use super::sparse::SparseSpd;

/// One weighted row `weight * (x[head] - x[tail] - rhs)^2`. A missing end is
/// the anchored vertex, whose value is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncidenceRow {
    pub edge: usize,
    pub tail: Option<usize>,
    pub head: Option<usize>,
    pub rhs: f64,
    pub weight: f64,
}

impl IncidenceRow {
    #[inline]
    pub fn residual(&self, x: &[f64]) -> f64 {
        let h = self.head.map_or(0.0, |i| x[i]);
        let t = self.tail.map_or(0.0, |i| x[i]);
        h - t - self.rhs
    }
}

/// An explicit weighted linear least-squares problem over an incidence
/// structure.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedLinearSystem {
    pub num_unknowns: usize,
    pub rows: Vec<IncidenceRow>,
}

impl WeightedLinearSystem {
    /// `sum weight * residual^2`.
    pub fn cost(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.weight * r.residual(x).powi(2)).sum()
    }

    /// Gradient of [`Self::cost`].
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.num_unknowns];
        for r in &self.rows {
            let v = 2.0 * r.weight * r.residual(x);
            if let Some(h) = r.head {
                g[h] += v;
            }
            if let Some(t) = r.tail {
                g[t] -= v;
            }
        }
        g
    }

    /// `A^T W b`, the right-hand side of the normal equations.
    pub fn normal_rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.num_unknowns];
        for r in &self.rows {
            if let Some(h) = r.head {
                b[h] += r.weight * r.rhs;
            }
            if let Some(t) = r.tail {
                b[t] -= r.weight * r.rhs;
            }
        }
        b
    }

    /// Euclidean norm of `A^T W (A x - b)`.
    pub fn normal_residual_norm(&self, x: &[f64]) -> f64 {
        self.gradient(x).iter().map(|g| 0.25 * g * g).sum::<f64>().sqrt()
    }

    /// Sparse solve through [`IncidenceSolver`].
    pub fn solve_sparse(&self) -> Result<Vec<f64>> {
        let mut solver = IncidenceSolver::new(self.num_unknowns, self.rows.iter().map(|r| (r.tail, r.head)));
        let weights: Vec<f64> = self.rows.iter().map(|r| r.weight).collect();
        let rhs: Vec<f64> = self.rows.iter().map(|r| r.rhs).collect();
        solver.factor(&weights)?;
        Ok(solver.solve(&weights, &rhs))
    }
}

#[derive(Clone, Debug)]
struct RowSlots {
    tail: Option<usize>,
    head: Option<usize>,
    tt: Option<usize>,
    hh: Option<usize>,
    th: Option<usize>,
    ht: Option<usize>,
}

/// Factorization cache for a fixed incidence structure. Only the row weights
/// and right-hand sides vary between solves.
#[derive(Clone, Debug)]
pub struct IncidenceSolver {
    rows: Vec<RowSlots>,
    matrix: SparseSpd,
}

impl IncidenceSolver {
    /// `rows` yields `(tail, head)` unknown indices per row.
    pub fn new(
        num_unknowns: usize,
        rows: impl IntoIterator<Item = (Option<usize>, Option<usize>)>,
    ) -> Self {
        let ends: Vec<_> = rows.into_iter().collect();
        let couplings = ends.iter().filter_map(|&(t, h)| Some((t?, h?)));
        let matrix = SparseSpd::new(num_unknowns, couplings);
        let rows = ends
            .iter()
            .map(|&(tail, head)| {
                let pair = tail.zip(head);
                RowSlots {
                    tail,
                    head,
                    tt: tail.map(|t| matrix.slot(t, t)),
                    hh: head.map(|h| matrix.slot(h, h)),
                    th: pair.map(|(t, h)| matrix.slot(t, h)),
                    ht: pair.map(|(t, h)| matrix.slot(h, t)),
                }
            })
            .collect();
        Self { rows, matrix }
    }

    pub fn num_unknowns(&self) -> usize {
        self.matrix.dim()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Assembles and factorizes `A^T W A` for the given row weights.
    pub fn factor(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} rows",
                weights.len(),
                self.rows.len()
            )));
        }
        self.matrix.clear();
        let values = self.matrix.values_mut();
        for (row, &w) in self.rows.iter().zip(weights) {
            if let Some(s) = row.tt {
                values[s] += w;
            }
            if let Some(s) = row.hh {
                values[s] += w;
            }
            if let (Some(a), Some(b)) = (row.th, row.ht) {
                values[a] -= w;
                values[b] -= w;
            }
        }
        self.matrix.factor()
    }

    /// Minimizer for per-row targets `rhs`, using the weights of the last
    /// [`Self::factor`] call (they are needed again to form `A^T W b`).
    pub fn solve(&self, weights: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.num_unknowns()];
        for ((row, &w), &y) in self.rows.iter().zip(weights).zip(rhs) {
            if let Some(h) = row.head {
                b[h] += w * y;
            }
            if let Some(t) = row.tail {
                b[t] -= w * y;
            }
        }
        self.matrix.solve(&b)
    }
}
