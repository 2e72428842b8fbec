//! Core linear-operator types: CSR sparse matrices, column-major dense
//! blocks, implicit operator handles, and SVD-based spectral oracles.
//!
//! Everything here is immutable after construction and safe to share across
//! threads; products fix their summation order so results are reproducible.

mod dense;
pub mod matrix_market;
mod operator;
mod spectral;
mod sparse;

pub use dense::DenseBlock;
pub use operator::LinearOperatorHandle;
pub use sparse::SparseMatrix;
pub use spectral::{
    partial_determinant, singular_values_bidiagonal, svd_summary, SpectralSummary, SIGMA_CLAMP,
};

/// Dense oracles (SVD, materialized Krylov spaces, dense factorizations)
/// refuse dimensions above this; the experiments never need more.
pub const DENSE_CAP: usize = 4096;
