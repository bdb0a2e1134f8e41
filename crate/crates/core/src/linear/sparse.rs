use sprs::{CsMat, PermOwned, SymmetryCheck};
use sprs_ldl::{LdlNumeric, LdlSymbolic};

use crate::error::{Error, Result};

/// Symmetric positive-definite matrix with a fixed sparsity pattern, stored
/// in full (both triangles) CSC form, with an AMD ordering and symbolic
/// LDL^T analysis computed once at construction.
#[derive(Clone, Debug)]
pub(crate) struct SparseSpd {
    mat: CsMat<f64>,
    symbolic: LdlSymbolic<usize>,
    numeric: Option<LdlNumeric<f64, usize>>,
}

impl SparseSpd {
    /// `off_diagonal` lists coupled pairs; each is inserted in both triangles.
    /// The diagonal is always part of the pattern.
    pub fn new(n: usize, off_diagonal: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for (i, j) in off_diagonal {
            if i != j {
                cols[j].push(i);
                cols[i].push(j);
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
            indices.extend_from_slice(col);
            indptr.push(indices.len());
        }
        let data = vec![0.0; indices.len()];

        let perm = if n > 0 {
            let (p, _, _) = amd::order(n, &indptr, &indices, &amd::Control::default())
                .expect("pattern is a valid sorted CSC structure");
            p
        } else {
            Vec::new()
        };
        let mat = CsMat::new_csc((n, n), indptr, indices, data);
        let symbolic =
            LdlSymbolic::new_perm(mat.view(), PermOwned::new(perm), SymmetryCheck::DontCheckSymmetry);
        Self {
            mat,
            symbolic,
            numeric: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// Storage slot of entry `(row, col)`; panics if outside the pattern.
    pub fn slot(&self, row: usize, col: usize) -> usize {
        let start = self.mat.indptr().outer_inds_sz(col).start;
        let column = &self.mat.indices()[self.mat.indptr().outer_inds_sz(col)];
        start
            + column
                .binary_search(&row)
                .unwrap_or_else(|_| panic!("({row}, {col}) is not in the pattern"))
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.mat.data_mut()
    }

    pub fn clear(&mut self) {
        self.mat.data_mut().fill(0.0);
    }

    /// Numeric factorization of the current values.
    pub fn factor(&mut self) -> Result<()> {
        // the LDL backend needs at least two rows
        if self.dim() <= 1 {
            return match self.mat.data().first() {
                Some(&d) if !(d > 0.0) => Err(Error::Singular("pivot 0 is not positive".into())),
                _ => Ok(()),
            };
        }
        let view = self.mat.view();
        let result = match self.numeric.as_mut() {
            Some(num) => num.update(view),
            None => self.symbolic.clone().factor(view).map(|num| {
                self.numeric = Some(num);
            }),
        };
        if let Err(e) = result {
            self.numeric = None;
            return Err(Error::Singular(e.to_string()));
        }
        let d = self.numeric.as_ref().expect("factorized above").d();
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(pos) = d.iter().position(|&v| !(v > 1e-13 * scale)) {
            self.numeric = None;
            return Err(Error::Singular(format!("pivot {pos} is not positive")));
        }
        Ok(())
    }

    /// Solves with the last successful factorization.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        if self.dim() <= 1 {
            return rhs.iter().map(|b| b / self.mat.data()[0]).collect();
        }
        let num = self.numeric.as_ref().expect("factor() must succeed before solve()");
        num.solve(rhs.to_vec())
    }
}
