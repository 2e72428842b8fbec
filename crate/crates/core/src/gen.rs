//! Seeded generators for test operators and fixtures: sparse SPD matrices
//! with a condition-number cap, rank-deficient Gram matrices, and dense
//! rotations/spectra for the experiment ensembles.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linops::{DenseBlock, SparseMatrix};
use crate::sketch::{sample_sparse_gaussian, SeedPath, SketchSpec, SplitMix64};

/// `B * B^T` for sparse `B`, accumulated with a dense row buffer in a fixed
/// order so the result is reproducible.
pub fn sparse_gram(b: &SparseMatrix) -> Result<SparseMatrix> {
    let n = b.n_rows();
    let bt = b.transpose();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut acc = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    for i in 0..n {
        for k in b.row_offsets()[i]..b.row_offsets()[i + 1] {
            let j = b.col_indices()[k];
            let v = b.values()[k];
            for t in bt.row_offsets()[j]..bt.row_offsets()[j + 1] {
                let col = bt.col_indices()[t];
                if acc[col] == 0.0 {
                    touched.push(col);
                }
                acc[col] += v * bt.values()[t];
            }
        }
        touched.sort_unstable();
        for &col in &touched {
            if acc[col] != 0.0 {
                triplets.push((i, col, acc[col]));
            }
            acc[col] = 0.0;
        }
        touched.clear();
    }
    SparseMatrix::from_triplets(n, n, &triplets)
}

fn symmetrize_sparse(a: &SparseMatrix) -> Result<SparseMatrix> {
    let t = a.transpose();
    let mut triplets = Vec::with_capacity(a.nnz());
    for i in 0..a.n_rows() {
        for k in a.row_offsets()[i]..a.row_offsets()[i + 1] {
            let j = a.col_indices()[k];
            triplets.push((i, j, 0.5 * a.values()[k] + 0.5 * t.get(i, j)));
        }
    }
    SparseMatrix::from_triplets(a.n_rows(), a.n_cols(), &triplets)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn power_lambda_max(a: &SparseMatrix, seed: u64) -> f64 {
    let n = a.n_rows();
    let mut rng = SeedPath::new(seed).child(u64::from(u32::MAX)).stream();
    let mut x: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let y = a.spmv(&x).expect("square");
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = x.iter().zip(&y).map(|(u, v)| u * v).sum::<f64>();
        x = y.iter().map(|v| v / norm).collect();
    }
    lambda.abs()
}

/// Random sparse SPD matrix `B B^T + delta I` where `B` is sparse Gaussian
/// with about `nnz_per_col` nonzeros per column, and `delta` is picked so the
/// condition number stays below `cond_cap`.
pub fn random_sparse_spd(
    n: usize,
    nnz_per_col: f64,
    cond_cap: f64,
    seed: u64,
) -> Result<SparseMatrix> {
    let h = nnz_per_col.min(n as f64).max(1.0);
    let b = sample_sparse_gaussian(&SketchSpec { n, s: n, h, seed })?;
    let gram = sparse_gram(&b)?;
    let lambda_max = power_lambda_max(&gram, seed);
    // Safety factor keeps the true condition number below the cap even though
    // power iteration slightly underestimates lambda_max.
    let delta = if cond_cap > 1.0 {
        (1.05 * lambda_max / (cond_cap - 1.0)).max(f64::MIN_POSITIVE)
    } else {
        lambda_max.max(1.0)
    };
    symmetrize_sparse(&gram.add_diagonal(delta)?)
}

/// Rank-deficient PSD matrix `B B^T` with `B` of width `rank < n`.
pub fn rank_deficient_spd(n: usize, rank: usize, seed: u64) -> Result<SparseMatrix> {
    let b = sample_sparse_gaussian(&SketchSpec {
        n,
        s: rank,
        h: (n as f64 / 2.0).max(1.0),
        seed,
    })?;
    symmetrize_sparse(&sparse_gram(&b)?)
}

/// Haar-ish random orthogonal matrix from the QR factorization of a Gaussian
/// matrix (deterministic for a fixed stream).
pub fn random_orthogonal(n: usize, rng: &mut SplitMix64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.next_normal());
    g.qr().q()
}

/// Dense symmetric matrix `Q diag(eigenvalues) Q^T` with a random rotation.
pub fn symmetric_with_spectrum(eigenvalues: &[f64], rng: &mut SplitMix64) -> DenseBlock {
    let n = eigenvalues.len();
    let q = random_orthogonal(n, rng);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(eigenvalues));
    let mut a = DenseBlock::from_dmatrix(&(&q * d * q.transpose()));
    a.symmetrize_in_place();
    a
}

/// `diag(1, 1/2, ..., 1/n)`.
pub fn harmonic_diagonal(n: usize) -> SparseMatrix {
    let vals: Vec<f64> = (1..=n).map(|i| 1.0 / i as f64).collect();
    SparseMatrix::diagonal(&vals).expect("diagonal is valid")
}
