//! Minimal dense row-major matrices and a Cholesky solver for symmetric
//! positive-definite systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{axpy, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, actual: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, actual: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[F]> {
        // chunks_exact(0) panics; a zero-width matrix has no meaningful rows
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn push_row(&mut self, row: &[F]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, actual: row.len() });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `selfᵀ · other`, without materializing the transpose.
    pub fn t_mul(&self, other: &Matrix<F>) -> Result<Matrix<F>> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, actual: other.rows });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for (a, b) in self.iter_rows().zip(other.iter_rows()) {
            for (i, &ai) in a.iter().enumerate() {
                if ai != F::zero() {
                    axpy(ai, b, out.row_mut(i));
                }
            }
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Matrix<F>) -> Result<Matrix<F>> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, actual: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for (k, &aik) in self.row(i).iter().enumerate() {
                let (src, dst) = (other.row(k), &mut out.data[i * other.cols..(i + 1) * other.cols]);
                axpy(aik, src, dst);
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &v| if v.abs() > acc { v.abs() } else { acc })
    }

    pub fn frobenius(&self) -> F {
        self.data.iter().map(|&v| v * v).sum::<F>().sqrt()
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G) -> Matrix<G> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<F> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;

    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<F> {
    factor: Matrix<F>,
}

impl<F: Scalar> Cholesky<F> {
    /// Factor a symmetric matrix. Only the lower triangle is read.
    ///
    /// A pivot that is not positive, or that falls below a relative
    /// tolerance of the largest diagonal entry, is reported as rank
    /// deficiency rather than papered over.
    pub fn factor(a: &Matrix<F>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: a.cols() });
        }
        let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(F::zero(), |m, v| if v > m { v } else { m });
        let tol = max_diag * F::epsilon() * F::from_count(n.max(1) * 100);

        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if diag.is_nan() || diag <= tol {
                return Err(Error::RankDeficient { pivot: j, size: n });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { factor: l })
    }

    pub fn size(&self) -> usize {
        self.factor.rows()
    }

    /// Solve `A x = b` in place for a single right-hand side.
    pub fn solve_vec(&self, b: &mut [F]) {
        let n = self.size();
        let l = &self.factor;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// Solve `A X = B` for every column of `B` with the shared factor.
    pub fn solve(&self, b: &Matrix<F>) -> Result<Matrix<F>> {
        if b.rows() != self.size() {
            return Err(Error::DimensionMismatch { expected: self.size(), actual: b.rows() });
        }
        let mut columns = b.transpose();
        for j in 0..columns.rows() {
            self.solve_vec(columns.row_mut(j));
        }
        Ok(columns.transpose())
    }
}
