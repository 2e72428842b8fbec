//! Compressed sparse row matrices.
//!
//! The storage is canonical: row offsets are nondecreasing, column indices are
//! strictly increasing within each row, and no explicit zeros are kept. All
//! products accumulate left-to-right within a row so results are
//! bit-reproducible.

use crate::error::{Error, Result};
use crate::linops::dense::DenseBlock;
use crate::linops::DENSE_CAP;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a canonical CSR matrix from (row, col, value) triplets.
    /// Duplicate positions are summed in sorted order; zeros are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::dim(format!(
                    "triplet ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse triplet value".into()));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut iter = sorted.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(i2, j2, v2)) = iter.peek() {
                if i2 == i && j2 == j {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                row_offsets[i + 1] += 1;
                col_indices.push(j);
                values.push(v);
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Wraps raw CSR arrays after validating the canonical-form invariants.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::dim("row_offsets length must be n_rows + 1"));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != values.len() {
            return Err(Error::arg("row_offsets must start at 0 and end at nnz"));
        }
        if col_indices.len() != values.len() {
            return Err(Error::dim("col_indices and values must have equal length"));
        }
        for i in 0..n_rows {
            if row_offsets[i] > row_offsets[i + 1] {
                return Err(Error::arg("row_offsets must be nondecreasing"));
            }
            let range = row_offsets[i]..row_offsets[i + 1];
            for k in range.clone() {
                if col_indices[k] >= n_cols {
                    return Err(Error::dim(format!("column index {} out of range", col_indices[k])));
                }
                if k > range.start && col_indices[k] <= col_indices[k - 1] {
                    return Err(Error::arg(
                        "column indices must be strictly increasing within a row",
                    ));
                }
                if values[k] == 0.0 {
                    return Err(Error::arg("explicit zeros are not stored"));
                }
                if !values[k].is_finite() {
                    return Err(Error::NonFinite("sparse value".into()));
                }
            }
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        SparseMatrix::from_triplets(n, n, &triplets).expect("identity is always valid")
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix::from_triplets(n_rows, n_cols, &[]).expect("empty matrix is always valid")
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let triplets: Vec<(usize, usize, f64)> =
            values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SparseMatrix::from_triplets(values.len(), values.len(), &triplets)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry lookup by binary search within the row.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                triplets.push((self.col_indices[k], i, self.values[k]));
            }
        }
        SparseMatrix::from_triplets(self.n_cols, self.n_rows, &triplets)
            .expect("transpose of a valid matrix is valid")
    }

    /// Symmetry test up to an absolute tolerance on entry differences.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let t = self.transpose();
        if t.col_indices != self.col_indices || t.row_offsets != self.row_offsets {
            // Patterns differ; fall back to entrywise comparison.
            for i in 0..self.n_rows {
                for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                    let j = self.col_indices[k];
                    if (self.values[k] - self.get(j, i)).abs() > tol {
                        return false;
                    }
                }
            }
            return true;
        }
        self.values
            .iter()
            .zip(&t.values)
            .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Sparse matrix-vector product `Ax` with fixed per-row summation order.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::dim(format!(
                "spmv: matrix has {} columns, vector has {}",
                self.n_cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Transposed product `A^T x`, accumulated in ascending row order.
    pub fn spmv_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::dim(format!(
                "spmv_t: matrix has {} rows, vector has {}",
                self.n_rows,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out[self.col_indices[k]] += self.values[k] * xi;
            }
        }
        Ok(out)
    }

    /// Sparse-times-dense product computed column by column.
    pub fn spmm(&self, b: &DenseBlock) -> Result<DenseBlock> {
        if b.n_rows() != self.n_cols {
            return Err(Error::dim(format!(
                "spmm: matrix has {} columns, block has {} rows",
                self.n_cols,
                b.n_rows()
            )));
        }
        let mut out = DenseBlock::zeros(self.n_rows, b.n_cols());
        for j in 0..b.n_cols() {
            let col = self.spmv(b.column(j))?;
            out.column_mut(j).copy_from_slice(&col);
        }
        Ok(out)
    }

    /// `A^T B` computed column by column.
    pub fn spmm_t(&self, b: &DenseBlock) -> Result<DenseBlock> {
        if b.n_rows() != self.n_rows {
            return Err(Error::dim(format!(
                "spmm_t: matrix has {} rows, block has {} rows",
                self.n_rows,
                b.n_rows()
            )));
        }
        let mut out = DenseBlock::zeros(self.n_cols, b.n_cols());
        for j in 0..b.n_cols() {
            let col = self.spmv_t(b.column(j))?;
            out.column_mut(j).copy_from_slice(&col);
        }
        Ok(out)
    }

    /// Dense copy, guarded by the desk-scale cap.
    pub fn to_dense(&self) -> Result<DenseBlock> {
        let n = self.n_rows.max(self.n_cols);
        if n > DENSE_CAP {
            return Err(Error::DenseCapExceeded { n, cap: DENSE_CAP });
        }
        let mut out = DenseBlock::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.set(i, self.col_indices[k], self.values[k]);
            }
        }
        Ok(out)
    }

    /// Adds `shift` to every diagonal entry of a square matrix.
    pub fn add_diagonal(&self, shift: f64) -> Result<SparseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::dim("add_diagonal needs a square matrix"));
        }
        let mut triplets = Vec::with_capacity(self.nnz() + self.n_rows);
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                triplets.push((i, self.col_indices[k], self.values[k]));
            }
            triplets.push((i, i, shift));
        }
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
    }
}
