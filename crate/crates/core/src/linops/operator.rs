//! Implicit linear operators: anything that can apply `x -> Ax`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linops::dense::DenseBlock;
use crate::linops::sparse::SparseMatrix;

/// Symmetry tolerance used when wrapping explicit matrices.
const SYMMETRY_TOL_SCALE: f64 = 1e-12;

/// A square linear operator given by matrix-vector multiplication access.
///
/// The `delta` argument of [`LinearOperatorHandle::apply_with_accuracy`] is
/// the requested absolute 2-norm accuracy of the product. Handles built from
/// explicit matrices are exact up to roundoff and ignore it; it exists so
/// approximate operators (such as the solver's inverse operator) share one
/// calling convention.
#[derive(Clone)]
pub struct LinearOperatorHandle {
    dim: usize,
    symmetric: bool,
    apply_fn: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl std::fmt::Debug for LinearOperatorHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearOperatorHandle")
            .field("dim", &self.dim)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

impl LinearOperatorHandle {
    pub fn new(
        dim: usize,
        symmetric: bool,
        apply_fn: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        LinearOperatorHandle {
            dim,
            symmetric,
            apply_fn: Arc::new(apply_fn),
        }
    }

    /// Wraps a square sparse matrix, verifying symmetry when claimed.
    pub fn from_sparse(a: SparseMatrix, symmetric: bool) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::dim(format!(
                "operator must be square, got {}x{}",
                a.n_rows(),
                a.n_cols()
            )));
        }
        let tol = SYMMETRY_TOL_SCALE
            * a.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if symmetric && !a.is_symmetric(tol) {
            return Err(Error::arg("matrix is not symmetric within tolerance"));
        }
        let dim = a.n_rows();
        Ok(LinearOperatorHandle::new(dim, symmetric, move |x| {
            a.spmv(x).expect("dimension checked by handle")
        }))
    }

    /// Wraps a dense symmetric matrix (symmetrized copy is taken).
    pub fn from_dense_symmetric(m: &DenseBlock) -> Result<Self> {
        if m.n_rows() != m.n_cols() {
            return Err(Error::dim("operator must be square"));
        }
        let mut sym = m.clone();
        sym.symmetrize_in_place();
        let dim = sym.n_rows();
        Ok(LinearOperatorHandle::new(dim, true, move |x| {
            sym.matvec(x).expect("dimension checked by handle")
        }))
    }

    pub fn identity(n: usize) -> Self {
        LinearOperatorHandle::new(n, true, |x| x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::dim(format!(
                "operator dimension {} but vector length {}",
                self.dim,
                x.len()
            )));
        }
        Ok((self.apply_fn)(x))
    }

    /// See the type-level note: `delta` is accepted for interface parity and
    /// ignored by exact handles.
    pub fn apply_with_accuracy(&self, x: &[f64], _delta: f64) -> Result<Vec<f64>> {
        self.apply(x)
    }

    /// Applies the operator to every column of a panel.
    pub fn apply_panel(&self, panel: &DenseBlock) -> Result<DenseBlock> {
        if panel.n_rows() != self.dim {
            return Err(Error::dim(format!(
                "operator dimension {} but panel has {} rows",
                self.dim,
                panel.n_rows()
            )));
        }
        let mut out = DenseBlock::zeros(panel.n_rows(), panel.n_cols());
        for j in 0..panel.n_cols() {
            let col = (self.apply_fn)(panel.column(j));
            out.column_mut(j).copy_from_slice(&col);
        }
        Ok(out)
    }
}
