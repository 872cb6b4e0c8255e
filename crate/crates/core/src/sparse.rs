//! Compressed sparse row matrices holding graph operators.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// CSR matrix. Column indices are strictly increasing within a row and no
/// explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    /// Validates raw CSR arrays and prunes exact zeros.
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        let bad = |msg: String| Error::invalid("csr", msg);
        if row_ptr.len() != n_rows + 1 {
            return Err(bad(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n_rows + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != col_idx.len() || col_idx.len() != values.len() {
            return Err(bad("row_ptr endpoints do not match nnz".into()));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(bad(format!("row_ptr decreases at row {r}")));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad(format!("column indices not strictly increasing in row {r}")));
            }
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(bad(format!("column index out of range in row {r}")));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
        .pruned())
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::invalid(
                    "csr",
                    format!("triplet ({r}, {c}) outside {n_rows}x{n_cols}"),
                ));
            }
        }
        sorted.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                let tail = values.len() - 1;
                values[tail] = values[tail] + v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
        .pruned())
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    /// Sparse copy of a dense matrix, keeping only nonzero entries.
    pub fn from_dense(m: &Dense<T>) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != T::zero() {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: m.rows(),
            n_cols: m.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|&v| v != T::zero()) {
            return self;
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.col_idx.len());
        let mut values = Vec::with_capacity(self.values.len());
        row_ptr.push(0);
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[k] != T::zero() {
                    col_idx.push(self.col_idx[k]);
                    values.push(self.values[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
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

    /// Iterates `(col, value)` pairs of one row in ascending column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> Dense<T> {
        let mut out = Dense::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// Applies `f` to every stored value; entries mapped to zero are pruned.
    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
        .pruned()
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && (0..self.n_rows).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                col_idx[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse-dense product `self * x`. Each output row accumulates its
    /// stored entries in ascending column order.
    pub fn spmm(&self, x: &Dense<T>) -> Result<Dense<T>> {
        if self.n_cols != x.rows() {
            return Err(Error::shape(
                "spmm",
                format!("dense operand with {} rows", self.n_cols),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        let d = x.cols();
        let mut out = Dense::zeros(self.n_rows, d);
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        if d == 1 {
            for (o, bounds) in os.iter_mut().zip(self.row_ptr.windows(2)) {
                let (lo, hi) = (bounds[0], bounds[1]);
                let mut acc = T::zero();
                for (&a, &c) in self.values[lo..hi].iter().zip(&self.col_idx[lo..hi]) {
                    acc = acc + a * xs[c];
                }
                *o = acc;
            }
            return Ok(out);
        }
        if d == 0 {
            return Ok(out);
        }
        for (out_row, bounds) in os.chunks_exact_mut(d).zip(self.row_ptr.windows(2)) {
            let (lo, hi) = (bounds[0], bounds[1]);
            for (&a, &c) in self.values[lo..hi].iter().zip(&self.col_idx[lo..hi]) {
                let x_row = &xs[c * d..(c + 1) * d];
                for (o, &b) in out_row.iter_mut().zip(x_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * g` by scattering, without building the transpose.
    pub fn spmm_transpose(&self, g: &Dense<T>) -> Result<Dense<T>> {
        if self.n_rows != g.rows() {
            return Err(Error::shape(
                "spmm_transpose",
                format!("dense operand with {} rows", self.n_rows),
                format!("{}x{}", g.rows(), g.cols()),
            ));
        }
        let d = g.cols();
        let mut out = Dense::zeros(self.n_cols, d);
        if d == 0 {
            return Ok(out);
        }
        let gs = g.as_slice();
        let os = out.as_mut_slice();
        for (g_row, bounds) in gs.chunks_exact(d).zip(self.row_ptr.windows(2)) {
            let (lo, hi) = (bounds[0], bounds[1]);
            for (&a, &c) in self.values[lo..hi].iter().zip(&self.col_idx[lo..hi]) {
                for (o, &b) in os[c * d..(c + 1) * d].iter_mut().zip(g_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// Sparse-sparse product `self * rhs` (row-by-row with a dense accumulator).
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::shape(
                "sparse matmul",
                format!("rhs with {} rows", self.n_cols),
                format!("{}x{}", rhs.n_rows, rhs.n_cols),
            ));
        }
        let mut acc = vec![T::zero(); rhs.n_cols];
        let mut touched = vec![false; rhs.n_cols];
        let mut cols: Vec<usize> = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..self.n_rows {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        cols.push(c);
                    }
                    acc[c] = acc[c] + a * b;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                if acc[c] != T::zero() {
                    col_idx.push(c);
                    values.push(acc[c]);
                }
                acc[c] = T::zero();
                touched[c] = false;
            }
            cols.clear();
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: rhs.n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Csr<U> {
        Csr {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| U::of(v.to_f64_exact())).collect(),
        }
    }
}

/// `[L^0 = I, L^1, ..., L^K]`, each materialized.
pub fn operator_powers<T: Scalar>(l: &Csr<T>, hops: usize) -> Result<Vec<Csr<T>>> {
    if l.n_rows() != l.n_cols() {
        return Err(Error::shape(
            "operator_powers",
            "square operator",
            format!("{}x{}", l.n_rows(), l.n_cols()),
        ));
    }
    let mut powers = Vec::with_capacity(hops + 1);
    powers.push(Csr::identity(l.n_rows()));
    for k in 1..=hops {
        let next = if k == 1 { l.clone() } else { powers[k - 1].matmul(l)? };
        powers.push(next);
    }
    Ok(powers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path2_laplacian() -> Csr<f64> {
        Csr::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]).unwrap()
    }

    #[test]
    fn triplets_sum_duplicates_and_prune_zeros() {
        let m = Csr::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 2, -1.0), (0, 0, 0.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 2), 0.0);
        assert_eq!(m.row_ptr(), &[0, 1, 1]);
    }

    #[test]
    fn from_parts_rejects_bad_structure() {
        assert!(Csr::<f64>::from_parts(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(Csr::<f64>::from_parts(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(Csr::<f64>::from_parts(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        let ok = Csr::<f64>::from_parts(1, 3, vec![0, 2], vec![0, 2], vec![0.0, 1.0]).unwrap();
        assert_eq!(ok.nnz(), 1);
    }

    #[test]
    fn spmm_identity_is_exact() {
        let x = Dense::from_rows(&[vec![1.5, -2.0], vec![0.1, 3.0], vec![7.0, 0.0]]).unwrap();
        assert_eq!(Csr::identity(3).spmm(&x).unwrap(), x);
    }

    #[test]
    fn spmm_path_laplacian_hand_product() {
        let x = Dense::column(vec![1.0, 0.0]);
        assert_eq!(path2_laplacian().spmm(&x).unwrap(), Dense::column(vec![1.0, -1.0]));
    }

    #[test]
    fn spmm_shape_mismatch() {
        let x = Dense::<f64>::zeros(3, 1);
        assert!(matches!(path2_laplacian().spmm(&x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn powers_of_path_laplacian() {
        let p = operator_powers(&path2_laplacian(), 2).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[0], Csr::identity(2));
        assert_eq!(
            p[2].to_dense(),
            Dense::from_rows(&[vec![2.0, -2.0], vec![-2.0, 2.0]]).unwrap()
        );
        assert_eq!(operator_powers(&path2_laplacian(), 0).unwrap(), vec![Csr::identity(2)]);
    }

    #[test]
    fn transpose_and_scatter_product_agree() {
        let m = Csr::from_triplets(2, 3, &[(0, 2, 1.5), (1, 0, -2.0), (1, 1, 0.5)]).unwrap();
        let g = Dense::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        assert_eq!(m.spmm_transpose(&g).unwrap(), m.transpose().spmm(&g).unwrap());
        assert_eq!(m.transpose().transpose(), m);
    }
}
