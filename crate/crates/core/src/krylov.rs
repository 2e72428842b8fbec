//! Implicit block Krylov space `K = [G | AG | ... | A^{m-1}G]` and assembly
//! of the block Hankel Gram matrix `(AK)^T (AK)` from sketched moments.
//!
//! `K` is never formed by powering `A`: panels are produced by repeated
//! application of the operator. At desk scale (`n <= DENSE_CAP`) the panels
//! are cached; above that only the streaming path runs.

use crate::error::{Error, Result};
use crate::linops::{
    svd_summary, DenseBlock, LinearOperatorHandle, SparseMatrix, SpectralSummary, DENSE_CAP,
};

/// Implicit representation of the block Krylov space matrix.
#[derive(Debug)]
pub struct KrylovOperator {
    a: LinearOperatorHandle,
    g: SparseMatrix,
    n: usize,
    s: usize,
    m: usize,
    /// `[G, AG, ..., A^{m-1}G]`, cached when `n <= DENSE_CAP`.
    blocks: Option<Vec<DenseBlock>>,
}

/// Builds the Krylov operator, caching panels at desk scale.
pub fn build_krylov(
    a: LinearOperatorHandle,
    g: SparseMatrix,
    m: usize,
) -> Result<KrylovOperator> {
    let cache = g.n_rows() <= DENSE_CAP;
    build_krylov_with_cache(a, g, m, cache)
}

/// As [`build_krylov`] but with explicit control over panel caching; the
/// streaming path recomputes panels on every application.
pub fn build_krylov_with_cache(
    a: LinearOperatorHandle,
    g: SparseMatrix,
    m: usize,
    cache: bool,
) -> Result<KrylovOperator> {
    if !a.symmetric() {
        return Err(Error::arg(
            "krylov construction requires a symmetric operator",
        ));
    }
    if m == 0 {
        return Err(Error::arg("step count m must be positive"));
    }
    let n = a.dim();
    if g.n_rows() != n {
        return Err(Error::dim(format!(
            "sketch has {} rows but operator dimension is {}",
            g.n_rows(),
            n
        )));
    }
    let s = g.n_cols();
    if s * m != n {
        return Err(Error::dim(format!(
            "krylov shape s*m = {}*{} must equal n = {}",
            s, m, n
        )));
    }
    let blocks = if cache {
        let mut blocks = Vec::with_capacity(m);
        blocks.push(g.to_dense()?);
        for i in 1..m {
            let next = a.apply_panel(&blocks[i - 1])?;
            if !next.is_finite() {
                return Err(Error::NonFinite(format!("krylov panel {i}")));
            }
            blocks.push(next);
        }
        Some(blocks)
    } else {
        None
    };
    Ok(KrylovOperator {
        a,
        g,
        n,
        s,
        m,
        blocks,
    })
}

impl KrylovOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn operator(&self) -> &LinearOperatorHandle {
        &self.a
    }

    pub fn sketch(&self) -> &SparseMatrix {
        &self.g
    }

    pub fn cached_blocks(&self) -> Option<&[DenseBlock]> {
        self.blocks.as_deref()
    }

    /// `K y = sum_i A^{i-1} G y_i` over the `m` length-`s` chunks of `y`.
    pub fn apply_k(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::dim(format!(
                "apply_k: expected length {}, got {}",
                self.n,
                y.len()
            )));
        }
        match &self.blocks {
            Some(blocks) => {
                let mut out = vec![0.0; self.n];
                for (i, block) in blocks.iter().enumerate() {
                    let contrib = block.matvec(&y[i * self.s..(i + 1) * self.s])?;
                    for (o, c) in out.iter_mut().zip(&contrib) {
                        *o += c;
                    }
                }
                Ok(out)
            }
            None => {
                // Horner form: G y_0 + A (G y_1 + A (...)).
                let mut w = self.g.spmv(&y[(self.m - 1) * self.s..])?;
                for i in (0..self.m - 1).rev() {
                    w = self.a.apply(&w)?;
                    let gyi = self.g.spmv(&y[i * self.s..(i + 1) * self.s])?;
                    for (wk, g) in w.iter_mut().zip(&gyi) {
                        *wk += g;
                    }
                }
                Ok(w)
            }
        }
    }

    /// `K^T x`: the stacked blocks `G^T A^{i-1} x` for `i = 1..m`.
    pub fn apply_kt(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::dim(format!(
                "apply_kt: expected length {}, got {}",
                self.n,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.n];
        let mut p = x.to_vec();
        for i in 0..self.m {
            let chunk = self.g.spmv_t(&p)?;
            out[i * self.s..(i + 1) * self.s].copy_from_slice(&chunk);
            if i + 1 < self.m {
                p = self.a.apply(&p)?;
            }
        }
        Ok(out)
    }

    /// Dense `n x n` materialization of `K` (diagnostic path).
    pub fn materialize(&self) -> Result<DenseBlock> {
        if self.n > DENSE_CAP {
            return Err(Error::DenseCapExceeded {
                n: self.n,
                cap: DENSE_CAP,
            });
        }
        let mut out = DenseBlock::zeros(self.n, self.n);
        let mut write = |i: usize, panel: &DenseBlock| {
            for j in 0..self.s {
                out.column_mut(i * self.s + j).copy_from_slice(panel.column(j));
            }
        };
        match &self.blocks {
            Some(blocks) => {
                for (i, b) in blocks.iter().enumerate() {
                    write(i, b);
                }
            }
            None => {
                let mut panel = self.g.to_dense()?;
                write(0, &panel);
                for i in 1..self.m {
                    panel = self.a.apply_panel(&panel)?;
                    write(i, &panel);
                }
            }
        }
        Ok(out)
    }

    /// SVD summary of the materialized Krylov matrix (experiment path).
    pub fn spectrum(&self) -> Result<SpectralSummary> {
        svd_summary(&self.materialize()?)
    }
}

/// The Gram matrix `(AK)^T (AK)` in block Hankel form: `2m - 1` moment blocks
/// `blocks[k] = G^T A^{k+2} G`, with full block `(i, j)` equal to
/// `blocks[i + j]`.
#[derive(Clone, Debug)]
pub struct BlockHankelMatrix {
    s: usize,
    m: usize,
    blocks: Vec<DenseBlock>,
}

impl BlockHankelMatrix {
    /// Wraps an explicit block sequence (mainly for tests and benchmarks);
    /// `blocks.len()` must be `2m - 1` and every block `s x s`.
    pub fn from_blocks(s: usize, m: usize, blocks: Vec<DenseBlock>) -> Result<Self> {
        if m == 0 || s == 0 {
            return Err(Error::arg("block hankel needs positive s and m"));
        }
        if blocks.len() != 2 * m - 1 {
            return Err(Error::dim(format!(
                "expected {} blocks, got {}",
                2 * m - 1,
                blocks.len()
            )));
        }
        if blocks.iter().any(|b| b.n_rows() != s || b.n_cols() != s) {
            return Err(Error::dim(format!("every block must be {s}x{s}")));
        }
        Ok(BlockHankelMatrix { s, m, blocks })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn size(&self) -> usize {
        self.s * self.m
    }

    pub fn blocks(&self) -> &[DenseBlock] {
        &self.blocks
    }

    /// Block `(i, j)`; anti-diagonal neighbours share storage.
    pub fn block(&self, i: usize, j: usize) -> &DenseBlock {
        &self.blocks[i + j]
    }

    pub fn trace(&self) -> f64 {
        let mut t = 0.0;
        for i in 0..self.m {
            let b = self.block(i, i);
            for k in 0..self.s {
                t += b.get(k, k);
            }
        }
        t
    }

    /// Dense `ms x ms` expansion.
    pub fn expand(&self) -> DenseBlock {
        let n = self.size();
        let mut out = DenseBlock::zeros(n, n);
        for bi in 0..self.m {
            for bj in 0..self.m {
                let b = self.block(bi, bj);
                for j in 0..self.s {
                    for i in 0..self.s {
                        out.set(bi * self.s + i, bj * self.s + j, b.get(i, j));
                    }
                }
            }
        }
        out
    }

    /// Quadratic-cost matvec over the block structure; the oracle for the
    /// FFT path and the dense side of the benchmark.
    pub fn matvec_blockwise(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        if v.len() != n {
            return Err(Error::dim(format!(
                "hankel matvec: expected length {n}, got {}",
                v.len()
            )));
        }
        let mut out = vec![0.0; n];
        for bi in 0..self.m {
            let acc = &mut out[bi * self.s..(bi + 1) * self.s];
            for bj in 0..self.m {
                let b = self.block(bi, bj);
                let chunk = b.matvec(&v[bj * self.s..(bj + 1) * self.s])?;
                for (a, c) in acc.iter_mut().zip(&chunk) {
                    *a += c;
                }
            }
        }
        Ok(out)
    }
}

/// Computes the moment blocks `G^T A^k G`, `k = 2..=2m`, by repeated panel
/// application, symmetrizing each block to remove roundoff asymmetry.
pub fn assemble_block_hankel(k: &KrylovOperator) -> Result<BlockHankelMatrix> {
    let (s, m) = (k.s(), k.m());
    let mut blocks = Vec::with_capacity(2 * m - 1);
    // Start from AG (reuse the cached panel when available).
    let mut panel = match k.cached_blocks() {
        Some(blocks) if blocks.len() > 1 => blocks[1].clone(),
        _ => k.operator().apply_panel(&k.sketch().to_dense()?)?,
    };
    for power in 2..=2 * m {
        panel = k.operator().apply_panel(&panel)?;
        if !panel.is_finite() {
            return Err(Error::NonFinite(format!("moment panel A^{power} G")));
        }
        let mut moment = k.sketch().spmm_t(&panel)?;
        moment.symmetrize_in_place();
        blocks.push(moment);
    }
    BlockHankelMatrix::from_blocks(s, m, blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::random_sparse_spd;
    use crate::sketch::{sample_sparse_gaussian, SeedPath, SketchSpec};

    fn dense_oracle_k(a: &DenseBlock, g: &DenseBlock, m: usize) -> DenseBlock {
        let n = a.n_rows();
        let s = g.n_cols();
        let mut out = DenseBlock::zeros(n, n);
        let mut panel = g.clone();
        for i in 0..m {
            if i > 0 {
                panel = a.matmul(&panel).unwrap();
            }
            for j in 0..s {
                out.column_mut(i * s + j).copy_from_slice(panel.column(j));
            }
        }
        out
    }

    #[test]
    fn identity_operator_blocks_equal_sketch() {
        let n = 6;
        let g = sample_sparse_gaussian(&SketchSpec { n, s: 2, h: 6.0, seed: 4 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::identity(n), g.clone(), 3).unwrap();
        let gd = g.to_dense().unwrap();
        for b in k.cached_blocks().unwrap() {
            assert_eq!(b, &gd);
        }
        // apply_k(y) = G * (sum of chunks).
        let mut rng = SeedPath::new(1).stream();
        let y: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        let summed: Vec<f64> = (0..2).map(|r| y[r] + y[r + 2] + y[r + 4]).collect();
        let want = g.spmv(&summed).unwrap();
        let got = k.apply_k(&y).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_is_sketch() {
        let n = 5;
        let g = sample_sparse_gaussian(&SketchSpec { n, s: 5, h: 3.0, seed: 8 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::identity(n), g.clone(), 1).unwrap();
        assert_eq!(k.materialize().unwrap(), g.to_dense().unwrap());
    }

    #[test]
    fn materialization_matches_dense_power_oracle() {
        let (n, s, m) = (8usize, 2usize, 4usize);
        let a = random_sparse_spd(n, 3.0, 100.0, 31).unwrap();
        let ad = a.to_dense().unwrap();
        let g = sample_sparse_gaussian(&SketchSpec { n, s, h: 4.0, seed: 2 }).unwrap();
        let k = build_krylov(
            LinearOperatorHandle::from_sparse(a, true).unwrap(),
            g.clone(),
            m,
        )
        .unwrap();
        let got = k.materialize().unwrap();
        let oracle = dense_oracle_k(&ad, &g.to_dense().unwrap(), m);
        let scale = oracle.max_abs();
        for (x, y) in got.data().iter().zip(oracle.data()) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn cached_and_streaming_agree() {
        let (n, s, m) = (12usize, 3usize, 4usize);
        let a = random_sparse_spd(n, 3.0, 50.0, 7).unwrap();
        let g = sample_sparse_gaussian(&SketchSpec { n, s, h: 5.0, seed: 6 }).unwrap();
        let h = LinearOperatorHandle::from_sparse(a, true).unwrap();
        let cached = build_krylov_with_cache(h.clone(), g.clone(), m, true).unwrap();
        let streaming = build_krylov_with_cache(h, g, m, false).unwrap();
        let mut rng = SeedPath::new(3).stream();
        let y: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        let scale: f64 = cached.apply_k(&y).unwrap().iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (u, v) in cached.apply_k(&y).unwrap().iter().zip(streaming.apply_k(&y).unwrap()) {
            assert!((u - v).abs() <= 1e-11 * scale.max(1.0));
        }
        assert_eq!(
            cached.apply_kt(&x).unwrap(),
            streaming.apply_kt(&x).unwrap(),
            "transpose path is identical code in both modes"
        );
        assert_eq!(cached.materialize().unwrap(), streaming.materialize().unwrap());
    }

    #[test]
    fn transpose_is_adjoint() {
        let (n, s, m) = (12usize, 4usize, 3usize);
        let a = random_sparse_spd(n, 3.0, 10.0, 77).unwrap();
        let g = sample_sparse_gaussian(&SketchSpec { n, s, h: 6.0, seed: 1 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::from_sparse(a, true).unwrap(), g, m).unwrap();
        let mut rng = SeedPath::new(10).stream();
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
            let lhs: f64 = k.apply_kt(&x).unwrap().iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(k.apply_k(&y).unwrap()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn shape_errors() {
        let g = sample_sparse_gaussian(&SketchSpec { n: 6, s: 2, h: 3.0, seed: 0 }).unwrap();
        // s*m != n
        assert!(build_krylov(LinearOperatorHandle::identity(6), g.clone(), 2).is_err());
        // non-symmetric flag
        let ns = LinearOperatorHandle::new(6, false, |x| x.to_vec());
        assert!(build_krylov(ns, g, 3).is_err());
    }

    #[test]
    fn hankel_identity_operator() {
        let n = 6;
        let g = sample_sparse_gaussian(&SketchSpec { n, s: 2, h: 6.0, seed: 12 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::identity(n), g.clone(), 3).unwrap();
        let h = assemble_block_hankel(&k).unwrap();
        let gtg = g.spmm_t(&g.to_dense().unwrap()).unwrap();
        for b in h.blocks() {
            for (x, y) in b.data().iter().zip(gtg.data()) {
                assert!((x - y).abs() <= 1e-12 * gtg.max_abs());
            }
        }
        // Expansion is the all-ones block pattern kron G^T G.
        let e = h.expand();
        for bi in 0..3 {
            for bj in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((e.get(bi * 2 + i, bj * 2 + j) - gtg.get(i, j)).abs() <= 1e-12 * gtg.max_abs());
                    }
                }
            }
        }
    }

    #[test]
    fn hankel_single_block_is_gram_of_ag() {
        let n = 4;
        let a = random_sparse_spd(n, 2.0, 10.0, 5).unwrap();
        let ad = a.to_dense().unwrap();
        let g = sample_sparse_gaussian(&SketchSpec { n, s: 4, h: 4.0, seed: 3 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::from_sparse(a, true).unwrap(), g.clone(), 1).unwrap();
        let h = assemble_block_hankel(&k).unwrap();
        assert_eq!(h.blocks().len(), 1);
        let ag = ad.matmul(&g.to_dense().unwrap()).unwrap();
        let gram = ag.transpose().matmul(&ag).unwrap();
        for (x, y) in h.blocks()[0].data().iter().zip(gram.data()) {
            assert!((x - y).abs() <= 1e-10 * gram.max_abs());
        }
        // PSD: minimum eigenvalue of a Gram matrix is >= -tol.
        let eig = h.blocks()[0].to_dmatrix().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * gram.max_abs()));
    }

    #[test]
    fn hankel_matches_dense_gram_oracle() {
        let (n, s, m) = (12usize, 3usize, 4usize);
        let a = random_sparse_spd(n, 3.0, 100.0, 13).unwrap();
        let ad = a.to_dense().unwrap();
        let g = sample_sparse_gaussian(&SketchSpec { n, s, h: 6.0, seed: 17 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::from_sparse(a, true).unwrap(), g.clone(), m).unwrap();
        let h = assemble_block_hankel(&k).unwrap();

        let kd = dense_oracle_k(&ad, &g.to_dense().unwrap(), m);
        let ak = ad.matmul(&kd).unwrap();
        let gram = ak.transpose().matmul(&ak).unwrap();
        let e = h.expand();
        let num: f64 = e
            .data()
            .iter()
            .zip(gram.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(num / gram.frobenius_norm() < 1e-10);

        // Expanded Gram is PSD up to roundoff.
        let eig = e.to_dmatrix().symmetric_eigen();
        let norm2 = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * norm2));
    }

    #[test]
    fn hankel_read_off_shares_storage() {
        let (n, s, m) = (8usize, 2usize, 4usize);
        let a = random_sparse_spd(n, 2.0, 10.0, 3).unwrap();
        let g = sample_sparse_gaussian(&SketchSpec { n, s, h: 4.0, seed: 9 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::from_sparse(a, true).unwrap(), g, m).unwrap();
        let h = assemble_block_hankel(&k).unwrap();
        for i in 0..m {
            for j in 0..m {
                for i2 in 0..m {
                    for j2 in 0..m {
                        if i + j == i2 + j2 {
                            assert!(std::ptr::eq(h.block(i, j), h.block(i2, j2)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn moment_recurrence_against_recomputation() {
        let (n, s, m) = (8usize, 2usize, 4usize);
        let a = random_sparse_spd(n, 2.0, 10.0, 23).unwrap();
        let ad = a.to_dense().unwrap();
        let g = sample_sparse_gaussian(&SketchSpec { n, s, h: 4.0, seed: 14 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::from_sparse(a.clone(), true).unwrap(), g.clone(), m).unwrap();
        let h = assemble_block_hankel(&k).unwrap();
        // Independent recomputation of each moment by explicit dense powers.
        let gd = g.to_dense().unwrap();
        let mut pk = gd.clone();
        for power in 1..=2 * m {
            pk = ad.matmul(&pk).unwrap();
            if power >= 2 {
                let mut want = gd.transpose().matmul(&pk).unwrap();
                want.symmetrize_in_place();
                let got = &h.blocks()[power - 2];
                for (x, y) in got.data().iter().zip(want.data()) {
                    assert!((x - y).abs() <= 1e-10 * want.max_abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn spectrum_identity_rank_deficiency() {
        // A = I with m >= 2 duplicates column blocks, so K is singular.
        let n = 6;
        let g = sample_sparse_gaussian(&SketchSpec { n, s: 3, h: 6.0, seed: 2 }).unwrap();
        let k = build_krylov(LinearOperatorHandle::identity(n), g, 2).unwrap();
        let sp = k.spectrum().unwrap();
        assert!(sp.is_singular_at_machine_precision(n));
        // m = 1 with G = I gives all-ones spectrum.
        let k = build_krylov(LinearOperatorHandle::identity(3), SparseMatrix::identity(3), 1).unwrap();
        let sp = k.spectrum().unwrap();
        assert!(sp.singular_values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
