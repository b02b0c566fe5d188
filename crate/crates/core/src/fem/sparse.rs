//! Compressed sparse row matrices assembled from triplet streams.

use crate::error::HomogError;

#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
    /// Set when the assembled form is symmetric; verified on assembly.
    pub symmetric: bool,
}

impl SparseMatrix {
    /// Build CSR from (row, col, value) triplets; duplicates are summed.
    /// If `symmetric` is requested the assembled matrix is checked to
    /// satisfy |A - A^T|_max <= 1e-12 |A|_max.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        symmetric: bool,
    ) -> Result<Self, HomogError> {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        let mut iter = triplets.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            debug_assert!(r < nrows && c < ncols);
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            vals.push(v);
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let m = SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
            symmetric,
        };
        if symmetric {
            let dev = m.symmetry_deviation();
            let scale = m.max_abs();
            if dev > 1e-12 * scale.max(1e-300) {
                return Err(HomogError::ValidationError(format!(
                    "assembled matrix flagged symmetric but |A - A^T|_max = {dev:.3e} (|A|_max = {scale:.3e})"
                )));
            }
        }
        Ok(m)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] = s;
        }
    }

    /// y += s * A^T x.
    pub fn matvec_transpose_add(&self, x: &[f64], s: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let xr = s * x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.vals[k] * xr;
            }
        }
    }

    /// y += s * A x.
    pub fn matvec_add(&self, x: &[f64], s: f64, y: &mut [f64]) {
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] += s * acc;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.col_idx[k] == c {
                return self.vals[k];
            }
        }
        0.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// max_{r,c} |A_rc - A_cr| (square matrices).
    pub fn symmetry_deviation(&self) -> f64 {
        let mut dev = 0.0_f64;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                dev = dev.max((self.vals[k] - self.get(c, r)).abs());
            }
        }
        dev
    }

    /// x^T A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * y[self.col_idx[k]];
            }
            s += x[r] * acc;
        }
        s
    }
}
