//! Row-major dense matrices.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix. Node-state blocks are `n_nodes x features`.
#[derive(Clone, PartialEq)]
pub struct Dense<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Dense::from_vec",
                format!("{} elements", rows * cols),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    "Dense::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single-column matrix.
    pub fn column(values: Vec<T>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    /// `self * rhs`. Accumulation runs over the inner index in ascending order.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "matmul",
                format!("rhs with {} rows", self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        let (n, inner) = (rhs.cols, self.cols);
        if n == 0 || inner == 0 {
            return Ok(out);
        }
        for (out_row, a_row) in out.data.chunks_exact_mut(n).zip(self.data.chunks_exact(inner)) {
            for (&a, b_row) in a_row.iter().zip(rhs.data.chunks_exact(n)) {
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::shape(
                "t_matmul",
                format!("rhs with {} rows", self.rows),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        let n = rhs.cols;
        let mut out = Self::zeros(self.cols, n);
        if n == 0 || self.cols == 0 {
            return Ok(out);
        }
        for (a_row, b_row) in self.data.chunks_exact(self.cols).zip(rhs.data.chunks_exact(n)) {
            for (&a, out_row) in a_row.iter().zip(out.data.chunks_exact_mut(n)) {
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhsᵀ` without materializing the transpose.
    pub fn matmul_t(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::shape(
                "matmul_t",
                format!("rhs with {} columns", self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                let mut acc = T::zero();
                for (&x, &y) in a.iter().zip(rhs.row(j)) {
                    acc = acc + x * y;
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination; caller guarantees equal shapes.
    pub(crate) fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `[self | other]`, column-wise.
    pub fn concat_cols(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows", self.rows),
                format!("{} rows", other.rows),
            ));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Columns `[start, start + width)`.
    pub fn slice_cols(&self, start: usize, width: usize) -> Self {
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Self {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "mean_abs_diff")?;
        let total: T = self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).sum();
        Ok(total / T::of(self.data.len() as f64))
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| if v.abs() > acc { v.abs() } else { acc })
    }

    /// Largest `|a - b| / max(|b|, floor)` over all entries.
    pub fn max_rel_diff(&self, reference: &Self, floor: T) -> Result<T> {
        self.check_same_shape(reference, "max_rel_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(&a, &b)| (a - b).abs() / b.abs().max(floor))
            .fold(T::zero(), T::max))
    }

    /// Converts element type through `f64`.
    pub fn cast<U: Scalar>(&self) -> Dense<U> {
        Dense {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.to_f64_exact())).collect(),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Dense<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dense {}x{} ", self.rows, self.cols)?;
        let cols = self.cols.max(1);
        f.debug_list().entries(self.data.chunks(cols)).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Dense<f64> {
        Dense::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_small() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0], &[6.0]]);
        assert_eq!(a.matmul(&b).unwrap(), m(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = m(&[&[1.0, -2.0, 0.5], &[3.0, 4.0, -1.0]]);
        let b = m(&[&[2.0, 1.0, 0.0], &[-1.0, 0.25, 3.0]]);
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        assert_eq!(a.matmul_t(&b).unwrap(), a.matmul(&b.transpose()).unwrap());
    }

    #[test]
    fn shape_errors() {
        let a = Dense::<f64>::zeros(2, 3);
        let b = Dense::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch { .. })));
        assert!(a.add(&Dense::zeros(3, 2)).is_err());
        assert!(a.concat_cols(&Dense::zeros(3, 1)).is_err());
        assert!(Dense::<f64>::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(Dense::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn concat_then_slice_recovers_blocks() {
        let a = m(&[&[1.0], &[2.0]]);
        let b = m(&[&[3.0, 4.0], &[5.0, 6.0]]);
        let c = a.concat_cols(&b).unwrap();
        assert_eq!(c, m(&[&[1.0, 3.0, 4.0], &[2.0, 5.0, 6.0]]));
        assert_eq!(c.slice_cols(0, 1), a);
        assert_eq!(c.slice_cols(1, 2), b);
    }

    #[test]
    fn mean_abs_diff_constant_offset() {
        let a = m(&[&[1.0], &[2.0]]);
        let b = m(&[&[1.5], &[2.5]]);
        assert_eq!(a.mean_abs_diff(&b).unwrap(), 0.5);
    }
}
