use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::WeightedLinearSystem;

/// Largest system the dense oracle accepts.
pub const DENSE_ORACLE_MAX_UNKNOWNS: usize = 200;

/// Reference solver: forms the normal equations explicitly as a dense matrix
/// and solves them by Cholesky. Intended for cross-checking the sparse path
/// on small problems.
pub fn dense_oracle_solve(system: &WeightedLinearSystem) -> Result<Vec<f64>> {
    let n = system.num_unknowns;
    if n > DENSE_ORACLE_MAX_UNKNOWNS {
        return Err(Error::InvalidArgument(format!(
            "dense oracle limited to {DENSE_ORACLE_MAX_UNKNOWNS} unknowns, got {n}"
        )));
    }
    let m = system.rows.len();
    let mut a = DMatrix::<f64>::zeros(m, n);
    let mut w = DVector::<f64>::zeros(m);
    let mut y = DVector::<f64>::zeros(m);
    for (k, r) in system.rows.iter().enumerate() {
        if let Some(h) = r.head {
            a[(k, h)] += 1.0;
        }
        if let Some(t) = r.tail {
            a[(k, t)] -= 1.0;
        }
        w[k] = r.weight;
        y[k] = r.rhs;
    }
    let wa = DMatrix::from_fn(m, n, |i, j| w[i] * a[(i, j)]);
    let normal = a.transpose() * &wa;
    let rhs = wa.transpose() * y;

    let scale = normal.diagonal().amax();
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::Singular("normal matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    if (0..n).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
        return Err(Error::Singular("normal matrix is rank deficient".into()));
    }
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::IncidenceRow;

    fn row(edge: usize, tail: Option<usize>, head: Option<usize>, rhs: f64, weight: f64) -> IncidenceRow {
        IncidenceRow { edge, tail, head, rhs, weight }
    }

    #[test]
    fn identity_system_returns_rhs() {
        let rows = (0..4).map(|i| row(i, None, Some(i), i as f64 * 1.5 - 2.0, 1.0)).collect();
        let sys = WeightedLinearSystem { num_unknowns: 4, rows };
        let x = dense_oracle_solve(&sys).unwrap();
        assert_eq!(x.len(), 4);
        for (i, v) in x.iter().enumerate() {
            assert!((v - (i as f64 * 1.5 - 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn scaling_weights_keeps_the_minimizer() {
        let rows = vec![
            row(0, None, Some(0), 1.0, 1.0),
            row(1, Some(0), Some(1), 1.0, 2.0),
            row(2, None, Some(1), 2.3, 0.5),
        ];
        let sys = WeightedLinearSystem { num_unknowns: 2, rows };
        let mut doubled = sys.clone();
        doubled.rows.iter_mut().for_each(|r| r.weight *= 2.0);
        let a = dense_oracle_solve(&sys).unwrap();
        let b = dense_oracle_solve(&doubled).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_is_an_error() {
        // unknown 1 never appears
        let sys = WeightedLinearSystem {
            num_unknowns: 2,
            rows: vec![row(0, None, Some(0), 1.0, 1.0)],
        };
        assert!(matches!(dense_oracle_solve(&sys), Err(Error::Singular(_))));
        let sys = WeightedLinearSystem {
            num_unknowns: 2,
            rows: vec![row(0, Some(0), Some(1), 1.0, 1.0)],
        };
        assert!(dense_oracle_solve(&sys).is_err());
    }

    #[test]
    fn oversized_system_is_refused() {
        let sys = WeightedLinearSystem { num_unknowns: 201, rows: vec![] };
        assert!(matches!(dense_oracle_solve(&sys), Err(Error::InvalidArgument(_))));
    }
}
