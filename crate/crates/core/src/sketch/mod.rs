//! Sparse Gaussian sketch generation and the seeding discipline shared by the
//! solver and the experiments.
//!
//! The sketch is an `n x s` matrix whose entries are independently standard
//! normal with probability `h / n` and zero otherwise. Columns are generated
//! from per-column seed paths, so any subset of columns is reproducible in
//! isolation.

mod rng;

pub use rng::{SeedPath, SplitMix64};

use crate::error::{Error, Result};
use crate::linops::SparseMatrix;

/// Parameters of a sparse Gaussian sketch.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct SketchSpec {
    /// Number of rows (the operator dimension).
    pub n: usize,
    /// Number of columns.
    pub s: usize,
    /// Expected nonzeros per column; the per-entry density is `h / n`.
    pub h: f64,
    pub seed: u64,
}

impl SketchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::arg("sketch needs at least one column"));
        }
        if !(self.h > 0.0) || self.h > self.n as f64 {
            return Err(Error::arg(format!(
                "sketch density parameter h={} must lie in (0, n={}]",
                self.h, self.n
            )));
        }
        Ok(())
    }

    pub fn density(&self) -> f64 {
        self.h / self.n as f64
    }
}

/// Samples the sparse Gaussian sketch. Each entry costs one uniform draw for
/// the keep/drop decision and two more (Box-Muller) when kept, so column `j`
/// is a pure function of `SeedPath(seed).child(j)`.
pub fn sample_sparse_gaussian(spec: &SketchSpec) -> Result<SparseMatrix> {
    spec.validate()?;
    let p = spec.density();
    let root = SeedPath::new(spec.seed);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..spec.s {
        let mut rng = root.child(j as u64).stream();
        for i in 0..spec.n {
            let keep = rng.next_f64() < p;
            if keep {
                let v = rng.next_normal();
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(spec.n, spec.s, &triplets)
}

/// Default sketch shape for the solver: `s = n / m` columns and density
/// parameter `h = min(n, ceil(c_h * m * ln n * ln(1/alpha)))`, at least 1.
///
/// `m` must already divide `n`; callers pad first (see [`pad_to_multiple`]).
pub fn default_sketch_width_and_density(
    n: usize,
    m: usize,
    alpha: f64,
    c_h: f64,
) -> Result<(usize, f64)> {
    if m == 0 {
        return Err(Error::arg("krylov step count m must be positive"));
    }
    if n % m != 0 {
        return Err(Error::arg(format!(
            "m={m} must divide n={n}; pad the matrix first"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha={alpha} must lie in (0, 1)")));
    }
    if !(c_h > 0.0) {
        return Err(Error::arg(format!("c_h={c_h} must be positive")));
    }
    let s = n / m;
    let raw = c_h * m as f64 * (n as f64).ln() * (1.0 / alpha).ln();
    let h = raw.ceil().max(1.0).min(n as f64);
    Ok((s, h))
}

/// Embeds a square matrix in the smallest multiple of `m`, putting ones on
/// the appended diagonal. The spectrum gains only unit singular values and
/// solutions extend by zeros, so solving the padded system is equivalent.
pub fn pad_to_multiple(a: &SparseMatrix, m: usize) -> Result<SparseMatrix> {
    if m == 0 {
        return Err(Error::arg("padding multiple must be positive"));
    }
    if a.n_rows() != a.n_cols() {
        return Err(Error::dim("pad_to_multiple needs a square matrix"));
    }
    let n = a.n_rows();
    if n % m == 0 {
        return Ok(a.clone());
    }
    let n_new = n.div_ceil(m) * m;
    let mut triplets = Vec::with_capacity(a.nnz() + (n_new - n));
    for i in 0..n {
        for k in a.row_offsets()[i]..a.row_offsets()[i + 1] {
            triplets.push((i, a.col_indices()[k], a.values()[k]));
        }
    }
    for i in n..n_new {
        triplets.push((i, i, 1.0));
    }
    SparseMatrix::from_triplets(n_new, n_new, &triplets)
}

/// Pads a right-hand side with zeros to match a padded matrix.
pub fn pad_vector(b: &[f64], n_new: usize) -> Vec<f64> {
    let mut out = b.to_vec();
    out.resize(n_new, 0.0);
    out
}
