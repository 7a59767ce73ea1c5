//! Compressed sparse row storage with deterministic triplet accumulation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{CutFemError, Result};

/// Collects `(row, col, value)` contributions; duplicates are summed in insertion order.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = (usize, usize, f64)>) {
        for (r, c, v) in entries {
            self.push(r, c, v);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(mut self) -> CsrMatrix {
        // Stable sort keeps the insertion order of duplicates, so the
        // summation order (and hence the result) is reproducible.
        self.entries.par_sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut b = TripletBuilder::new(diag.len(), diag.len());
        b.extend(diag.iter().enumerate().map(|(i, &v)| (i, i, v)));
        b.build()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .into_par_iter()
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::new(self.ncols, self.nrows);
        b.extend(self.triplets().map(|(r, c, v)| (c, r, v)));
        b.build()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "transpose matvec dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::new(self.nrows, self.ncols);
        b.extend(self.triplets());
        b.extend(other.triplets().map(|(r, c, v)| (r, c, alpha * v)));
        b.build()
    }

    pub fn sum<'a>(nrows: usize, ncols: usize, parts: impl IntoIterator<Item = &'a CsrMatrix>) -> CsrMatrix {
        let parts: Vec<&CsrMatrix> = parts.into_iter().collect();
        for p in &parts {
            assert_eq!((p.nrows, p.ncols), (nrows, ncols));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            for p in &parts {
                row.extend(p.row(r));
            }
            // Stable: duplicates are summed in part order.
            row.sort_by_key(|e| e.0);
            let mut last = None;
            for &(c, v) in &row {
                if last == Some(c) {
                    *values.last_mut().expect("entry exists") += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn symmetric_part(&self) -> CsrMatrix {
        let mut sym = self.add_scaled(&self.transpose(), 1.0);
        sym.values.iter_mut().for_each(|v| *v *= 0.5);
        sym
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference `max |A - B|`.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        self.add_scaled(other, -1.0).max_abs()
    }

    /// Largest asymmetry `max |A - Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.transpose())
    }

    /// The leading `n × n` block.
    pub fn leading_block(&self, n: usize) -> CsrMatrix {
        let mut b = TripletBuilder::new(n, n);
        b.extend(self.triplets().filter(|&(r, c, _)| r < n && c < n));
        b.build()
    }

    /// Keeps only the rows and columns whose index satisfies `keep`.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> CsrMatrix {
        let mut b = TripletBuilder::new(self.nrows, self.ncols);
        b.extend(self.triplets().filter(|&(r, c, _)| keep(r) && keep(c)));
        b.build()
    }

    /// Writes the matrix in Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a Matrix Market coordinate file written by [`write_matrix_market`](Self::write_matrix_market).
    pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
        let text = std::fs::read_to_string(path)?;
        let bad = |msg: &str| CutFemError::InvalidInput(format!("matrix market: {msg}"));
        let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing size line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("invalid size line")))
            .collect::<Result<_>>()?;
        let [nrows, ncols, _] = header[..] else {
            return Err(bad("size line needs three integers"));
        };
        let mut b = TripletBuilder::new(nrows, ncols);
        for line in lines {
            let mut it = line.split_whitespace();
            let mut next = || it.next().ok_or_else(|| bad("short entry line"));
            let r: usize = next()?.parse().map_err(|_| bad("invalid row"))?;
            let c: usize = next()?.parse().map_err(|_| bad("invalid column"))?;
            let v: f64 = next()?.parse().map_err(|_| bad("invalid value"))?;
            if r == 0 || c == 0 || r > nrows || c > ncols {
                return Err(bad("index out of range"));
            }
            b.push(r - 1, c - 1, v);
        }
        Ok(b.build())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 3);
        b.push(1, 2, 1.5);
        b.push(0, 0, 1.0);
        b.push(1, 2, 2.0);
        let m = b.build();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 2), 3.5);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.matvec(&[1.0, 1.0, 2.0]), vec![1.0, 7.0]);
        assert_eq!(m.transpose_matvec(&[1.0, 1.0]), vec![1.0, 0.0, 3.5]);
    }

    #[test]
    fn matrix_market_round_trip() {
        let mut b = TripletBuilder::new(3, 3);
        b.extend([(0, 0, 1.0), (2, 1, -0.1), (1, 2, 1e-17)]);
        let m = b.build();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        m.write_matrix_market(&path).unwrap();
        assert_eq!(CsrMatrix::read_matrix_market(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn matvec_matches_dense(entries in prop::collection::vec((0usize..5, 0usize..4, -10.0f64..10.0), 0..40),
                                x in prop::collection::vec(-1.0f64..1.0, 4)) {
            let mut dense = [[0.0; 4]; 5];
            let mut b = TripletBuilder::new(5, 4);
            for &(r, c, v) in &entries {
                dense[r][c] += v;
                b.push(r, c, v);
            }
            let m = b.build();
            let y = m.matvec(&x);
            for r in 0..5 {
                let expected: f64 = (0..4).map(|c| dense[r][c] * x[c]).sum();
                prop_assert!((y[r] - expected).abs() < 1e-12);
            }
            let t = m.transpose();
            prop_assert!(m.leading_block(4).symmetric_part().asymmetry() < 1e-14);
            for (r, c, v) in t.triplets() {
                prop_assert_eq!(m.get(c, r), v);
            }
        }
    }
}
