use std::fmt::Debug;
use std::ops::{Add, Mul, Neg};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::{Error, Result};

/// Rows per rayon task in parallel products; below this, run serially.
const PAR_ROWS: usize = 4096;

/// Element type of a [`CsrMatrix`]. Implemented for `f64` and for `i64`
/// (exact incidence algebra).
pub trait Scalar:
    Copy + Debug + PartialEq + Send + Sync + Add<Output = Self> + Mul<Output = Self> + Neg<Output = Self> + 'static
{
    const ZERO: Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for i64 {
    const ZERO: Self = 0;
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Compressed sparse row matrix with sorted, duplicate-free column indices
/// and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

pub type SparseMatrix = CsrMatrix<f64>;
pub type IntMatrix = CsrMatrix<i64>;

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_ptr: vec![0; rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self
    where
        T: From<i8>,
    {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::from(1); n],
        }
    }

    /// Builds from raw CSR arrays, validating structure. Duplicates are
    /// summed and zeros dropped.
    pub fn from_csr(rows: usize, cols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::Shape("row_ptr inconsistent with dimensions".into()));
        }
        if col_idx.len() != values.len() {
            return Err(Error::Shape("col_idx and values differ in length".into()));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Shape("row_ptr not monotone".into()));
        }
        let mut trip = Vec::with_capacity(values.len());
        for r in 0..rows {
            for k in row_ptr[r]..row_ptr[r + 1] {
                if col_idx[k] >= cols {
                    return Err(Error::Shape(format!("column {} out of range", col_idx[k])));
                }
                trip.push((r, col_idx[k], values[k]));
            }
        }
        Self::from_triplets(rows, cols, trip)
    }

    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut trip: Vec<(usize, usize, T)>) -> Result<Self> {
        if let Some(&(r, c, _)) = trip.iter().find(|(r, c, _)| *r >= rows || *c >= cols) {
            return Err(Error::Shape(format!("entry ({r},{c}) outside {rows}x{cols}")));
        }
        // stable, so duplicates are summed in input order (keeps assembly deterministic and symmetric)
        trip.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut values = Vec::with_capacity(trip.len());
        let mut i = 0;
        while i < trip.len() {
            let (r, c, mut v) = trip[i];
            i += 1;
            while i < trip.len() && trip[i].0 == r && trip[i].1 == c {
                v = v + trip[i].2;
                i += 1;
            }
            if v != T::ZERO {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self { rows, cols, row_ptr, col_idx, values })
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => T::ZERO,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (c, v) = self.row(r);
            c.iter().zip(v).map(move |(c, v)| (r, *c, *v))
        })
    }

    /// Checked `y = A x`.
    pub fn spmv(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!("spmv: {}x{} times vector of {}", self.rows, self.cols, x.len())));
        }
        let mut y = vec![T::ZERO; self.rows];
        self.mul_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without shape checks beyond debug assertions.
    pub fn mul_into(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        let row_dot = |r: usize| {
            let mut s = T::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s = s + self.values[k] * x[self.col_idx[k]];
            }
            s
        };
        if self.rows >= PAR_ROWS {
            y.par_chunks_mut(PAR_ROWS / 4).enumerate().for_each(|(c, chunk)| {
                let base = c * (PAR_ROWS / 4);
                for (i, yi) in chunk.iter_mut().enumerate() {
                    *yi = row_dot(base + i);
                }
            });
        } else {
            for (r, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(r);
            }
        }
    }

    /// `y += alpha · A x`.
    pub fn mul_add_into(&self, alpha: T, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, yi) in y.iter_mut().enumerate() {
            let mut s = T::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s = s + self.values[k] * x[self.col_idx[k]];
            }
            *yi = *yi + alpha * s;
        }
    }

    /// `y += alpha · Aᵀ x` without forming the transpose.
    pub fn transpose_mul_add(&self, alpha: T, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (r, xr) in x.iter().enumerate() {
            let a = alpha * *xr;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                y[c] = y[c] + a * self.values[k];
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::ZERO; self.nnz()];
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                col_idx[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        Self { rows: self.cols, cols: self.rows, row_ptr, col_idx, values }
    }

    /// Sparse product `A·B`; exact cancellations are compressed out.
    pub fn spgemm(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "spgemm: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let n = other.cols;
        let rows: Vec<(Vec<usize>, Vec<T>)> = (0..self.rows)
            .into_par_iter()
            .map_init(
                || (vec![T::ZERO; n], vec![false; n], Vec::new()),
                |(acc, used, touched), r| {
                    touched.clear();
                    for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                        let a = self.values[k];
                        let (bc, bv) = other.row(self.col_idx[k]);
                        for (c, v) in bc.iter().zip(bv) {
                            if !used[*c] {
                                used[*c] = true;
                                touched.push(*c);
                                acc[*c] = a * *v;
                            } else {
                                acc[*c] = acc[*c] + a * *v;
                            }
                        }
                    }
                    touched.sort_unstable();
                    let mut cols = Vec::with_capacity(touched.len());
                    let mut vals = Vec::with_capacity(touched.len());
                    for &c in touched.iter() {
                        if acc[c] != T::ZERO {
                            cols.push(c);
                            vals.push(acc[c]);
                        }
                        used[c] = false;
                    }
                    (cols, vals)
                },
            )
            .collect();
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (c, v) in rows {
            col_idx.extend(c);
            values.extend(v);
            row_ptr.push(col_idx.len());
        }
        Ok(Self { rows: self.rows, cols: n, row_ptr, col_idx, values })
    }

    /// `alpha·A + beta·B`.
    pub fn add_scaled(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let trip = self
            .triplets()
            .map(|(r, c, v)| (r, c, alpha * v))
            .chain(other.triplets().map(|(r, c, v)| (r, c, beta * v)))
            .collect();
        Self::from_triplets(self.rows, self.cols, trip)
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let trip = self.triplets().map(|(r, c, v)| (r, c, alpha * v)).collect();
        Self::from_triplets(self.rows, self.cols, trip).expect("same shape")
    }

    pub fn to_f64(&self) -> CsrMatrix<f64> {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| v.to_f64()).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v.to_f64();
        }
        d
    }
}

impl CsrMatrix<f64> {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij − A_ji|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.transpose();
        let d = self.add_scaled(1.0, &t, -1.0).expect("square");
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            d.max_abs() / scale
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.rows];
        self.mul_into(x, &mut y);
        y.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Diagonal matrix with the given entries (zeros dropped).
    pub fn from_diagonal(d: &[f64]) -> Self {
        let trip = d.iter().enumerate().map(|(i, v)| (i, i, *v)).collect();
        Self::from_triplets(d.len(), d.len(), trip).expect("in range")
    }
}
