//! Small dense real matrices and the handful of factorizations the
//! constructions need (row reduction, null spaces, least squares).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(alloc::format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from rows; all rows must have `cols` entries.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape(alloc::format!("row of length {} != {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>], rows: usize) -> Result<Self> {
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::Shape(alloc::format!("column of length {} != {rows}", c.len())));
            }
            for i in 0..rows {
                m[(i, j)] = c[i];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matrix product shape");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matrix-vector shape");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Row vector times matrix: `v^T A`.
    pub fn left_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "vector-matrix shape");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix difference shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix sum shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "vstack shape");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix { rows: self.rows + other.rows, cols: self.cols, data }
    }

    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "hstack shape");
        let mut out = Matrix::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            out.row_mut(i)[..self.cols].copy_from_slice(self.row(i));
            out.row_mut(i)[self.cols..].copy_from_slice(other.row(i));
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (jj, &j) in idx.iter().enumerate() {
                out[(i, jj)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Reduced row echelon form with partial pivoting. Returns the nonzero
    /// rows of the reduced matrix and the pivot columns.
    pub fn rref(&self, tol: f64) -> (Matrix, Vec<usize>) {
        let mut a = self.clone();
        let scale = self.max_abs().max(1.0);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..a.cols {
            if r == a.rows {
                break;
            }
            let (mut best, mut best_val) = (r, a[(r, c)].abs());
            for i in r + 1..a.rows {
                if a[(i, c)].abs() > best_val {
                    best = i;
                    best_val = a[(i, c)].abs();
                }
            }
            if best_val <= tol * scale {
                for i in r..a.rows {
                    a[(i, c)] = 0.0;
                }
                continue;
            }
            a.swap_rows(r, best);
            let p = a[(r, c)];
            for j in 0..a.cols {
                a[(r, j)] /= p;
            }
            for i in 0..a.rows {
                if i != r {
                    let factor = a[(i, c)];
                    if factor != 0.0 {
                        for j in 0..a.cols {
                            let v = a[(r, j)];
                            a[(i, j)] -= factor * v;
                        }
                        a[(i, c)] = 0.0;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        let reduced = a.select_rows(&(0..r).collect::<Vec<_>>());
        (reduced, pivots)
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.rref(tol).1.len()
    }

    /// Basis of the null space as columns, read off from the reduced row
    /// echelon form (coordinate-aligned when the kernel is).
    pub fn null_space(&self, tol: f64) -> Matrix {
        let (r, pivots) = self.rref(tol);
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Matrix::zeros(self.cols, free.len());
        for (k, &fc) in free.iter().enumerate() {
            basis[(fc, k)] = 1.0;
            for (pi, &pc) in pivots.iter().enumerate() {
                basis[(pc, k)] = -r[(pi, fc)];
            }
        }
        basis
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// Solves the square system `A x = b` by Gaussian elimination.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.rows != self.cols || b.len() != self.rows {
            return Err(Error::Shape("solve needs a square system".into()));
        }
        let n = self.rows;
        let mut aug = self.hstack(&Matrix::from_columns(&[b.to_vec()], n)?);
        let scale = self.max_abs().max(1.0);
        for c in 0..n {
            let mut best = c;
            for i in c + 1..n {
                if aug[(i, c)].abs() > aug[(best, c)].abs() {
                    best = i;
                }
            }
            if aug[(best, c)].abs() <= 1e-13 * scale {
                return Err(Error::NotInjective);
            }
            aug.swap_rows(c, best);
            for i in c + 1..n {
                let f = aug[(i, c)] / aug[(c, c)];
                if f != 0.0 {
                    for j in c..=n {
                        let v = aug[(c, j)];
                        aug[(i, j)] -= f * v;
                    }
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = aug[(i, n)];
            for j in i + 1..n {
                s -= aug[(i, j)] * x[j];
            }
            x[i] = s / aug[(i, i)];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.rows;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            cols.push(self.solve(&e)?);
        }
        Matrix::from_columns(&cols, n)
    }

    /// Least-squares solution of `A x ≈ b` through Householder QR; `A`
    /// must have full column rank.
    pub fn lstsq(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (m, n) = (self.rows, self.cols);
        if b.len() != m || m < n {
            return Err(Error::Shape("least squares needs rows >= cols".into()));
        }
        let mut a = self.clone();
        let mut y = b.to_vec();
        let scale = self.max_abs().max(1.0);
        for k in 0..n {
            let norm = libm::sqrt((k..m).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>());
            if norm <= 1e-13 * scale {
                return Err(Error::NotInjective);
            }
            let alpha = if a[(k, k)] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = (k..m).map(|i| a[(i, k)]).collect();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * a[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..m {
                    a[(i, j)] -= s * v[i - k];
                }
            }
            let s: f64 = (k..m).map(|i| v[i - k] * y[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                y[i] -= s * v[i - k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= a[(i, j)] * x[j];
            }
            x[i] = s / a[(i, i)];
        }
        Ok(x)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rref_and_null_space_of_coordinate_projection() {
        let p = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 3).unwrap();
        let k = p.null_space(1e-12);
        assert_eq!(k.cols(), 1);
        assert_eq!(k.column(0), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn null_space_is_annihilated() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 1.0, 0.5]], 4).unwrap();
        let k = a.null_space(1e-12);
        assert_eq!(k.cols(), 2);
        assert!(a.mul(&k).max_abs() < 1e-12);
    }

    #[test]
    fn solve_and_lstsq_agree_on_square_systems() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 3.0]], 2).unwrap();
        let b = [1.0, 2.0];
        let x = a.solve(&b).unwrap();
        let y = a.lstsq(&b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!(sub_vec(&a.mul_vec(&x), &b).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn singular_solve_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]], 2).unwrap();
        assert_eq!(a.solve(&[1.0, 1.0]), Err(Error::NotInjective));
    }
}
