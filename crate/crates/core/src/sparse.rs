//! Compressed sparse row storage with summed duplicate entries.

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Result, StokesError};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` entries; duplicates are summed
    /// in input order, so the result is deterministic for a fixed input.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in entries {
            assert!(r < nrows && c < ncols, "entry ({r}, {c}) outside {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // bucket by row, keeping input order within a row
        let mut next = counts.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let (start, end) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(start..end);
            order.sort_by_key(|&k| cols[k]);
            for &k in &order {
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == cols[k] {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    indices.push(cols[k]);
                    values.push(vals[k]);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows, ncols, indptr, indices, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (r, c, v) in self.triplets() {
            out[c] += v * y[r];
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|` over all entries.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for (r, c, v) in self.triplets() {
            worst = worst.max((v - t.get(r, c)).abs());
        }
        for (r, c, v) in t.triplets() {
            worst = worst.max((v - self.get(r, c)).abs());
        }
        worst
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| StokesError::Factorization(format!("{e:?}")))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_rows_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, -1.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(0).0, &[0, 2]);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn products_match_dense() {
        let m = CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, 2.0), (2, 0, -3.0), (2, 1, 4.0)]);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![1.0, 2.0, 1.0]);
        assert_eq!(m.matvec_transpose(&[1.0, 1.0, 1.0]), vec![-2.0, 6.0]);
        let d = m.to_dense();
        assert_eq!(d[(2, 1)], 4.0);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn asymmetry_detects_nonsymmetric_entries() {
        let s = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        assert_eq!(s.asymmetry(), 0.0);
        let n = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]);
        assert_eq!(n.asymmetry(), 1.0);
    }
}
