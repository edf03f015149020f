//! Sparse matrix kernels, log-sum-exp helpers and entropic primitives.
//!
//! All reductions run in a fixed order (row-major, left to right) so repeated
//! evaluations on identical inputs are bit-identical.

use crate::error::{instance, Result};

/// Tolerance on the sum of a [`SimplexVector`].
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Inputs whose sum is off by at most this much are renormalized on construction.
pub const SIMPLEX_RENORM_TOL: f64 = 1e-9;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets in any order.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, v) in &t {
            if i >= rows || j >= cols {
                return instance(format!("entry ({i},{j}) out of range for {rows}x{cols} matrix"));
            }
            if !v.is_finite() {
                return instance(format!("entry ({i},{j}) is not finite"));
            }
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in t.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return instance(format!("duplicate entry ({},{})", w[0].0, w[0].1));
            }
        }
        let mut row_ptr = vec![0usize; rows + 1];
        for &(i, _, _) in &t {
            row_ptr[i + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx: t.iter().map(|e| e.1).collect(),
            values: t.iter().map(|e| e.2).collect(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_ptr: vec![0; rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t).expect("identity is well formed")
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Result<Self> {
        let rows = a.len();
        let cols = a.first().map_or(0, |r| r.len());
        let mut t = Vec::new();
        for (i, r) in a.iter().enumerate() {
            if r.len() != cols {
                return instance("ragged dense matrix");
            }
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(rows, cols, &t)
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

    /// Entries of row `i` as `(col, value)` pairs in column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// All entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    /// Entrywise absolute value.
    pub fn abs(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.abs());
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Maximum row ℓ1 norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `max_i |A_ij|` for every column.
    pub fn col_abs_max(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (&j, &v) in self.col_idx.iter().zip(&self.values) {
            out[j] = f64::max(out[j], v.abs());
        }
        out
    }

    /// Restriction to the listed rows, in the listed order.
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        let mut t = Vec::new();
        for (new_i, &i) in keep.iter().enumerate() {
            t.extend(self.row(i).map(|(j, v)| (new_i, j, v)));
        }
        Self::from_triplets(keep.len(), self.cols, &t).expect("row selection stays well formed")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Product with `A`, `Aᵀ`, `|A|` or `|A|ᵀ`.
    pub fn spmv(&self, v: &[f64], transpose: bool, absolute: bool) -> Result<Vec<f64>> {
        let (want, len) = if transpose { (self.rows, self.cols) } else { (self.cols, self.rows) };
        if v.len() != want {
            return instance(format!("spmv dimension mismatch: vector has {} entries, expected {want}", v.len()));
        }
        let mut out = vec![0.0; len];
        if transpose {
            self.tmul_into(v, &mut out, absolute);
        } else {
            self.mul_into(v, &mut out, absolute);
        }
        Ok(out)
    }

    /// `out = A v` (or `|A| v`); dimensions are the caller's responsibility.
    pub fn mul_into(&self, v: &[f64], out: &mut [f64], absolute: bool) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = if absolute { self.values[k].abs() } else { self.values[k] };
                s += a * v[self.col_idx[k]];
            }
            *o = s;
        }
    }

    /// `out = Aᵀ v` (or `|A|ᵀ v`), accumulated row by row.
    pub fn tmul_into(&self, v: &[f64], out: &mut [f64], absolute: bool) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate().take(self.rows) {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = if absolute { self.values[k].abs() } else { self.values[k] };
                out[self.col_idx[k]] += a * vi;
            }
        }
    }
}

/// `log Σ exp(vᵢ)`, shifted by the maximum. Returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if mx == f64::INFINITY {
        return f64::INFINITY;
    }
    mx + v.iter().map(|&a| (a - mx).exp()).sum::<f64>().ln()
}

/// Overwrites `logits` with the normalized distribution `exp(logits) / Σ exp(logits)`.
pub fn softmax_in_place(logits: &mut [f64]) {
    let lse = log_sum_exp(logits);
    logits.iter_mut().for_each(|l| *l = (*l - lse).exp());
}

/// `-μ log Σ exp(-vᵢ/μ)`.
pub fn softmin(v: &[f64], mu: f64) -> Result<f64> {
    if v.is_empty() {
        return instance("softmin of an empty vector");
    }
    if mu <= 0.0 || !mu.is_finite() {
        return instance("softmin requires mu > 0");
    }
    let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = v.iter().map(|&a| (-(a - mn) / mu).exp()).sum();
    Ok(mn - mu * s.ln())
}

/// `Σ xᵢ log xᵢ` with `0 log 0 = 0`.
pub fn entropy(x: &[f64]) -> f64 {
    x.iter().map(|&a| if a > 0.0 { a * a.ln() } else { 0.0 }).sum()
}

/// Bregman divergence of the entropy, `Σ xᵢ log(xᵢ/x0ᵢ) − xᵢ + x0ᵢ`.
pub fn kl_div(x: &[f64], x0: &[f64]) -> Result<f64> {
    if x.len() != x0.len() {
        return instance("kl_div dimension mismatch");
    }
    let mut s = 0.0;
    for (&a, &b) in x.iter().zip(x0) {
        if a > 0.0 {
            if b <= 0.0 {
                return instance("kl_div reference has a zero where the argument is positive");
            }
            s += a * (a / b).ln() - a + b;
        } else {
            s += b;
        }
    }
    Ok(s.max(0.0))
}

pub fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Validates nonnegativity and the unit sum, renormalizing small drift.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return instance("simplex vector must be nonempty");
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return instance("simplex vector has a negative or non-finite entry");
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_RENORM_TOL {
            return instance(format!("simplex vector sums to {s}"));
        }
        let mut values = values;
        if (s - 1.0).abs() > 0.0 {
            values.iter_mut().for_each(|v| *v /= s);
        }
        Ok(Self(values))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Deref for SimplexVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A point of the unit box `[0,1]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxVector(Vec<f64>);

impl BoxVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return instance("box vector entry outside [0,1]");
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for BoxVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}
