//! Sketched block Krylov solver and random-matrix experiment harness.
//!
//! The library has two halves:
//!
//! * a solver pipeline for symmetric sparse linear systems that sketches the
//!   operator with a sparse Gaussian matrix, forms the block Krylov space
//!   `K = [G | AG | ... | A^{m-1}G]` implicitly, and solves the Gram system
//!   `(AK)^T (AK) y = (AK)^T b` through its block Hankel structure
//!   ([`pipeline`], built on [`linops`], [`sketch`], [`krylov`], [`hankel`]);
//! * a Monte Carlo harness ([`xlab`]) that measures minimum singular values of
//!   several random matrix ensembles against explicit anti-concentration
//!   bounds, including negative controls that must be flagged as failing.
//!
//! All randomness flows through [`sketch::SeedPath`], a counter-based
//! splittable scheme, so every result is reproducible from a single root seed
//! regardless of thread count.

pub mod error;
pub mod gen;
pub mod hankel;
pub mod krylov;
pub mod linops;
pub mod pipeline;
pub mod sketch;
pub mod xlab;

pub use error::{Error, Result};
pub use linops::{DenseBlock, LinearOperatorHandle, SparseMatrix, SpectralSummary};
pub use sketch::{SeedPath, SketchSpec};
