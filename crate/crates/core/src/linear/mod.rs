//! Sparse weighted linear least squares over incidence structures.
//!
//! Both linear subproblems of the pipeline have rows of the form
//! `x[head] - x[tail] - rhs` with a per-row weight, where vertex 0 is
//! eliminated (its unknown is fixed at zero). The normal matrix is a weighted
//! reduced graph Laplacian; its pattern depends only on topology, so the
//! fill-reducing ordering and symbolic factorization are computed once per
//! problem and only numeric values change between solves.

mod dense;
mod problems;
pub(crate) mod sparse;
mod system;

pub use dense::dense_oracle_solve;
pub use problems::{
    angle_system, solve_angles, solve_translations, translation_systems, AngleProblem,
    TranslationProblem,
};
pub use system::{IncidenceRow, IncidenceSolver, WeightedLinearSystem};

/// Unknown index of a vertex after eliminating the anchor.
#[inline]
pub(crate) fn unknown(vertex: usize) -> Option<usize> {
    vertex.checked_sub(1)
}
