//! Compressed sparse row matrices over `f64`.
//!
//! Used for propagation operators and sparse feature matrices during
//! training and discrete (non-differentiable) attack-loss evaluation. Column
//! indices are sorted within each row and row accumulation walks them in
//! ascending order, which fixes the floating-point summation order.

use ndarray::Array2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets. Triplets are sorted by
    /// (row, col); duplicate coordinates are rejected.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::shape(format!(
                    "triplet ({r}, {c}) out of bounds for {nrows}x{ncols} matrix"
                )));
            }
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in triplets.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::shape(format!(
                    "duplicate coordinate ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Csr {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Keep every entry of `dense` with a nonzero value.
    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let (nrows, ncols) = dense.dim();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = dense[[i, j]];
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        let (_, vals) = self.row(i);
        vals.iter().sum()
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0f64; self.nnz()];
        let mut next = counts;
        // Row-major scan keeps the transposed columns sorted per row.
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Csr {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    /// Dense product `self * rhs`, row-parallel.
    pub fn matmul_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.ncols {
            return Err(Error::shape(format!(
                "spmm: {}x{} * {}x{}",
                self.nrows,
                self.ncols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        let k = rhs.ncols();
        let mut out = Array2::<f64>::zeros((self.nrows, k));
        let rhs_slice = rhs
            .as_slice()
            .ok_or_else(|| Error::shape("spmm rhs must be contiguous"))?;
        {
            let out_slice = out.as_slice_mut().expect("freshly allocated");
            par::for_each_row(out_slice, k, |i, row| {
                let (cols, vals) = self.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    let src = &rhs_slice[c * k..(c + 1) * k];
                    for (o, &s) in row.iter_mut().zip(src) {
                        *o += v * s;
                    }
                }
            });
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[[i, c]] = v;
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs_diff(&self, other: &Csr) -> f64 {
        let a = self.to_dense();
        let b = other.to_dense();
        let mut m = 0.0f64;
        for (x, y) in a.iter().zip(b.iter()) {
            m = m.max((x - y).abs());
        }
        m
    }
}

/// A CSR matrix bundled with its transpose, shared across tapes and epochs.
#[derive(Debug, Clone)]
pub struct SharedCsr {
    pub mat: Arc<Csr>,
    pub t: Arc<Csr>,
}

impl SharedCsr {
    pub fn new(mat: Csr) -> Self {
        let t = mat.transpose();
        SharedCsr {
            mat: Arc::new(mat),
            t: Arc::new(t),
        }
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_and_lookup() {
        let m = Csr::from_triplets(2, 3, vec![(0, 2, 3.0), (0, 0, 1.0), (1, 1, -2.0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(1, 1), -2.0);
    }

    #[test]
    fn duplicate_triplet_rejected() {
        let err = Csr::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let m = Csr::from_triplets(3, 2, vec![(0, 1, 5.0), (2, 0, 7.0), (1, 1, 1.5)]).unwrap();
        let tt = m.transpose().transpose();
        assert_eq!(m.to_dense(), tt.to_dense());
    }

    #[test]
    fn spmm_matches_dense() {
        let m = Csr::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]).unwrap();
        let rhs = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let got = m.matmul_dense(&rhs).unwrap();
        assert_eq!(got, array![[11.0, 14.0], [9.0, 12.0]]);
    }
}
