//! Small dense matrices over f64.
//!
//! Bases in scope have at most a few dozen entries, so a plain row-major
//! `Vec<f64>` with straightforward O(n^3) kernels is all that is needed.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from a list of columns.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let nc = cols.len();
        let nr = cols.first().map(|c| c.len()).unwrap_or(0);
        for c in cols {
            if c.len() != nr {
                return Err(Error::DimensionMismatch { expected: nr, got: c.len() });
            }
        }
        let mut m = Self::zeros(nr, nc);
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::from_columns(rows)?.transpose())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    pub fn transpose(&self) -> DMat {
        let mut t = DMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.at(i, j));
            }
        }
        t
    }

    pub fn scale(&self, c: f64) -> DMat {
        DMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &DMat) -> DMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &DMat) -> DMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn matmul(&self, other: &DMat) -> DMat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = DMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        self.data.chunks_exact(self.cols.max(1)).map(|row| dot(row, v)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.at(i, i)).sum()
    }

    /// Induced 1-norm: maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.at(i, j).abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Solves A X = B by LU with partial pivoting; A is consumed as a copy.
    ///
    /// Row swaps only ever pull up rows with a nonzero candidate pivot, and a
    /// zero multiplier leaves a zero row entry untouched, so exact sparsity
    /// patterns such as upper-block-triangularity survive the solve.
    pub fn solve(&self, rhs: &DMat) -> Result<DMat> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(self.rows, rhs.rows, "solve shape mismatch");
        let n = self.rows;
        let mut a = self.clone();
        let mut x = rhs.clone();
        for k in 0..n {
            let mut piv = k;
            let mut best = a.at(k, k).abs();
            for r in (k + 1)..n {
                let v = a.at(r, k).abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularSystem);
            }
            if piv != k {
                for j in 0..n {
                    let t = a.at(k, j);
                    a.set(k, j, a.at(piv, j));
                    a.set(piv, j, t);
                }
                for j in 0..x.cols {
                    let t = x.at(k, j);
                    x.set(k, j, x.at(piv, j));
                    x.set(piv, j, t);
                }
            }
            let d = a.at(k, k);
            for r in (k + 1)..n {
                let m = a.at(r, k) / d;
                if m == 0.0 {
                    continue;
                }
                a.set(r, k, 0.0);
                for j in (k + 1)..n {
                    let v = a.at(r, j) - m * a.at(k, j);
                    a.set(r, j, v);
                }
                for j in 0..x.cols {
                    let v = x.at(r, j) - m * x.at(k, j);
                    x.set(r, j, v);
                }
            }
        }
        for k in (0..n).rev() {
            let d = a.at(k, k);
            for j in 0..x.cols {
                let mut s = x.at(k, j);
                for c in (k + 1)..n {
                    let coeff = a.at(k, c);
                    if coeff != 0.0 {
                        s -= coeff * x.at(c, j);
                    }
                }
                x.set(k, j, s / d);
            }
        }
        Ok(x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_reproduces_identity() {
        let a = DMat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = a.solve(&DMat::identity(2)).unwrap();
        let prod = a.matmul(&x);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.at(i, j) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn solve_keeps_exact_block_zeros() {
        // Upper-block-triangular with 1x1 and 2x2 diagonal blocks.
        let a = DMat::from_rows(&[
            vec![1.0, 0.5, 0.25],
            vec![0.0, 2.0, 0.5],
            vec![0.0, 1.0, 3.0],
        ])
        .unwrap();
        let x = a.solve(&DMat::identity(3)).unwrap();
        assert_eq!(x.at(1, 0), 0.0);
        assert_eq!(x.at(2, 0), 0.0);
    }

    #[test]
    fn norms() {
        let a = DMat::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.norm_1(), 6.0);
        assert!((a.norm_fro() - 30.0_f64.sqrt()).abs() < 1e-15);
    }
}
