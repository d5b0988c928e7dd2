//! Compressed sparse row matrices used as constant graph operators.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// CSR matrix with sorted, duplicate-free column indices in each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// An all-zero matrix.
    pub fn empty(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, weight)` triplets in any order.
    ///
    /// Out-of-range indices, repeated coordinates and non-finite weights are rejected.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = triplets.to_vec();
        for &(r, c, w) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::shape(format!(
                    "sparse entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !w.is_finite() {
                return Err(Error::contract(format!("non-finite sparse weight at ({r}, {c})")));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::contract(format!(
                "duplicate sparse coordinate ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut row_ptr = vec![0; rows + 1];
        for &(r, _, _) in &entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        })
    }

    /// Keeps the nonzero entries of a dense rank-2 tensor.
    pub fn from_dense(dense: &Tensor) -> Result<Self> {
        let (r, c) = dense.dims2()?;
        let mut triplets = Vec::new();
        for i in 0..r {
            for j in 0..c {
                let v = dense.at(i, j);
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        SparseMatrix::from_triplets(r, c, &triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of one row as `(col, weight)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, w)| (r, c, w)))
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, w)| w).sum()).collect()
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.rows, self.cols]);
        for (r, c, w) in self.triplets() {
            t.set(r, c, w);
        }
        t
    }

    pub fn transpose(&self) -> SparseMatrix {
        let flipped: Vec<_> = self.triplets().into_iter().map(|(r, c, w)| (c, r, w)).collect();
        SparseMatrix::from_triplets(self.cols, self.rows, &flipped)
            .expect("transpose of a valid sparse matrix is valid")
    }

    /// Returns a copy with every row scaled by the matching factor.
    pub fn scale_rows(&self, factors: &[f64]) -> SparseMatrix {
        assert_eq!(factors.len(), self.rows);
        let mut out = self.clone();
        for r in 0..self.rows {
            for v in &mut out.values[self.row_ptr[r]..self.row_ptr[r + 1]] {
                *v *= factors[r];
            }
        }
        out
    }

    /// Same sparsity pattern with each weight mapped through `f(row, col, w)`.
    pub fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64) -> SparseMatrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[p] = f(r, self.col_idx[p], self.values[p]);
            }
        }
        out
    }

    /// `self · dense` without recording anything.
    pub fn matmul_dense(&self, dense: &Tensor) -> Result<Tensor> {
        let (k, n) = dense.dims2()?;
        if k != self.cols {
            return Err(Error::shape(format!(
                "sparse matmul inner dimensions differ: [{}, {}] x {:?}",
                self.rows,
                self.cols,
                dense.shape()
            )));
        }
        let mut out = Tensor::zeros(&[self.rows, n]);
        let d = dense.data();
        let o = out.data_mut();
        for r in 0..self.rows {
            for (c, w) in self.row(r) {
                let src = &d[c * n..(c + 1) * n];
                for (dst, &s) in o[r * n..(r + 1) * n].iter_mut().zip(src) {
                    *dst += w * s;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, &[(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn entries_are_sorted() {
        let s = SparseMatrix::from_triplets(3, 3, &[(2, 1, 1.0), (0, 2, 2.0), (0, 0, 3.0)]).unwrap();
        assert_eq!(s.triplets(), vec![(0, 0, 3.0), (0, 2, 2.0), (2, 1, 1.0)]);
        assert_eq!(s.get(0, 2), 2.0);
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn transpose_swaps_coordinates() {
        let s = SparseMatrix::from_triplets(2, 3, &[(0, 2, 5.0)]).unwrap();
        let t = s.transpose();
        assert_eq!((t.rows(), t.cols()), (3, 2));
        assert_eq!(t.get(2, 0), 5.0);
    }
}
