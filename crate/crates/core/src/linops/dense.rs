//! Column-major dense blocks used for Krylov panels, moment blocks and
//! right-hand-side/solution panels.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseBlock {
    /// Zero block of the given shape.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseBlock {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = DenseBlock::zeros(n, n);
        for i in 0..n {
            b.set(i, i, 1.0);
        }
        b
    }

    /// Wraps a column-major buffer. The length must equal `n_rows * n_cols`.
    pub fn from_column_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::dim(format!(
                "dense block {}x{} needs {} entries, got {}",
                n_rows,
                n_cols,
                n_rows * n_cols,
                data.len()
            )));
        }
        Ok(DenseBlock {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut b = DenseBlock::zeros(n_rows, n_cols);
        for j in 0..n_cols {
            for i in 0..n_rows {
                b.set(i, j, f(i, j));
            }
        }
        b
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        self.data[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        self.data[j * self.n_rows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> DenseBlock {
        DenseBlock::from_fn(self.n_cols, self.n_rows, |i, j| self.get(j, i))
    }

    /// `(self + self^T) / 2`; requires a square block.
    pub fn symmetrize_in_place(&mut self) {
        assert_eq!(self.n_rows, self.n_cols, "symmetrize needs a square block");
        for j in 0..self.n_cols {
            for i in 0..j {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }

    /// Dense matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &DenseBlock) -> Result<DenseBlock> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::dim(format!(
                "matmul {}x{} * {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        Ok(DenseBlock::from_dmatrix(
            &(self.to_dmatrix() * rhs.to_dmatrix()),
        ))
    }

    /// Dense matrix-vector product with a fixed accumulation order
    /// (ascending column index per output entry).
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::dim(format!(
                "matvec: block has {} columns, vector has {}",
                self.n_cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.n_rows];
        for (j, xj) in x.iter().enumerate() {
            let col = self.column(j);
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * xj;
            }
        }
        Ok(out)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n_rows, self.n_cols, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> DenseBlock {
        DenseBlock {
            n_rows: m.nrows(),
            n_cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }

    /// Writes one text row per matrix row, comma-separated, at full `f64`
    /// round-trip precision.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                if j > 0 {
                    write!(w, ",")?;
                }
                write!(w, "{}", self.get(i, j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a block previously written by [`DenseBlock::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<DenseBlock> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Parse(format!("csv line {}: {e}", lineno + 1)))?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse(format!(
                        "csv line {}: ragged row ({} vs {} fields)",
                        lineno + 1,
                        row.len(),
                        first.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty csv".into()));
        }
        let n_rows = rows.len();
        let n_cols = rows[0].len();
        Ok(DenseBlock::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity() {
        let b = DenseBlock::identity(3);
        assert_eq!(b.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let b = DenseBlock::from_fn(3, 2, |i, j| (i as f64 + 0.1) * 3.7f64.powi(j as i32 + 1));
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let back = DenseBlock::read_csv(&buf[..]).unwrap();
        assert_eq!(b, back);
    }

    #[test]
    fn symmetrize() {
        let mut b = DenseBlock::from_fn(2, 2, |i, j| (i * 2 + j) as f64);
        b.symmetrize_in_place();
        assert_eq!(b.get(0, 1), b.get(1, 0));
        assert_eq!(b.get(0, 1), 1.5);
    }
}
