//! Banded storage for the finite-difference structure of the smoothing QP.
//!
//! Constraint rows are short contiguous stencils (`[1]`, `[-1, 1]`,
//! `[1, -2, 1]`), so `P + sigma I + A' R A` is a symmetric band matrix and
//! every linear solve is O(n * bw^2).

use crate::error::{Error, Result};

/// A sparse row whose support is the contiguous column range
/// `first .. first + coeffs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub first: usize,
    pub coeffs: Vec<f64>,
}

impl BandRow {
    pub fn new(first: usize, coeffs: Vec<f64>) -> Self {
        Self { first, coeffs }
    }

    pub fn unit(col: usize) -> Self {
        Self::new(col, vec![1.0])
    }

    pub fn last(&self) -> usize {
        self.first + self.coeffs.len() - 1
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(&x[self.first..])
            .map(|(c, v)| c * v)
            .sum()
    }

    /// `out += alpha * row'`
    pub fn axpy_into(&self, alpha: f64, out: &mut [f64]) {
        for (c, o) in self.coeffs.iter().zip(&mut out[self.first..]) {
            *o += alpha * c;
        }
    }
}

/// Row-major sparse matrix built from [`BandRow`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    ncols: usize,
    rows: Vec<BandRow>,
}

impl RowMatrix {
    pub fn new(ncols: usize, rows: Vec<BandRow>) -> Result<Self> {
        if let Some((i, r)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.coeffs.is_empty() || r.last() >= ncols)
        {
            return Err(Error::InvalidInput(format!(
                "row {i} spans columns {}..{} outside 0..{ncols}",
                r.first,
                r.first + r.coeffs.len()
            )));
        }
        Ok(Self { ncols, rows })
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rows(&self) -> &[BandRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &BandRow {
        &self.rows[i]
    }

    /// Half-bandwidth of `A' A`.
    pub fn gram_bandwidth(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.coeffs.len() - 1)
            .max()
            .unwrap_or(0)
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&self.rows) {
            *o = r.dot(x);
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        self.mul_into(x, &mut out);
        out
    }

    pub fn mul_transpose_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                r.axpy_into(yi, out);
            }
        }
    }

    pub fn mul_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        self.mul_transpose_into(y, &mut out);
        out
    }
}

/// Symmetric band matrix with lower storage: `data[i * (bw + 1) + d]` holds
/// `M[i][i - d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        if d > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + d]
        }
    }

    fn slot(&mut self, i: usize, d: usize) -> &mut f64 {
        &mut self.data[i * (self.bw + 1) + d]
    }

    /// Copy with a (possibly) wider band.
    pub fn widened(&self, bw: usize) -> Self {
        assert!(bw >= self.bw);
        let mut out = Self::zeros(self.n, bw);
        for i in 0..self.n {
            for d in 0..=self.bw.min(i) {
                *out.slot(i, d) = self.data[i * (self.bw + 1) + d];
            }
        }
        out
    }

    pub fn diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.data[i * (self.bw + 1)])
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.n {
            *self.slot(i, 0) += value;
        }
    }

    /// `M += weight * row' row`.
    pub fn add_outer(&mut self, row: &BandRow, weight: f64) {
        debug_assert!(row.coeffs.len() <= self.bw + 1);
        for (a, &ca) in row.coeffs.iter().enumerate() {
            for (b, &cb) in row.coeffs.iter().enumerate().take(a + 1) {
                *self.slot(row.first + a, a - b) += weight * ca * cb;
            }
        }
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        let w = self.bw + 1;
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let band = &self.data[i * w..(i + 1) * w];
            let mut acc = band[0] * x[i];
            for d in 1..=self.bw.min(i) {
                acc += band[d] * x[i - d];
            }
            for d in 1..=self.bw.min(self.n - 1 - i) {
                acc += self.data[(i + d) * w + d] * x[i + d];
            }
            *o = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_into(x, &mut out);
        out
    }

    /// `0.5 x' M x`
    pub fn half_quadratic(&self, x: &[f64]) -> f64 {
        0.5 * self.mul(x).iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[i * w + (i - j)];
                for k in lo.max(j.saturating_sub(bw))..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Internal(format!(
                            "band matrix not positive definite at pivot {i} ({s})"
                        )));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

/// Lower factor `L` with `M = L L'`, in the same band layout as [`SymBand`].
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for d in 1..=self.bw.min(i) {
                s -= self.l[i * w + d] * b[i - d];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for d in 1..=self.bw.min(self.n - 1 - i) {
                s -= self.l[(i + d) * w + d] * b[i + d];
            }
            b[i] = s / self.l[i * w];
        }
    }
}
