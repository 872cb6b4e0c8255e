//! Irregularly timestamped snapshot sequences.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One observation: timestamp, node states, optional exogenous inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub t: f64,
    pub x: Dense<T>,
    pub z: Option<Dense<T>>,
}

impl<T: Scalar> Snapshot<T> {
    pub fn new(t: f64, x: Dense<T>) -> Self {
        Self { t, x, z: None }
    }
}

/// Non-empty sequence of snapshots with strictly increasing timestamps and
/// consistent shapes. Gaps between timestamps may be arbitrary.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSequence<T> {
    entries: Vec<Snapshot<T>>,
}

impl<T: Scalar> SnapshotSequence<T> {
    pub fn new(entries: Vec<Snapshot<T>>) -> Result<Self> {
        let first = entries.first().ok_or(Error::EmptySequence)?;
        let x_shape = first.x.shape();
        let z_shape = first.z.as_ref().map(Dense::shape);
        for (i, s) in entries.iter().enumerate() {
            if !s.t.is_finite() {
                return Err(Error::invalid(format!("entries[{i}].t"), "timestamp is not finite"));
            }
            if i > 0 && s.t <= entries[i - 1].t {
                return Err(Error::NonMonotonicTimestamps {
                    index: i,
                    prev: entries[i - 1].t,
                    found: s.t,
                });
            }
            if s.x.shape() != x_shape {
                return Err(Error::shape(
                    "snapshot x",
                    format!("{}x{}", x_shape.0, x_shape.1),
                    format!("{}x{} at index {i}", s.x.rows(), s.x.cols()),
                ));
            }
            let zs = s.z.as_ref().map(Dense::shape);
            if zs != z_shape || zs.is_some_and(|(r, _)| r != x_shape.0) {
                return Err(Error::shape(
                    "snapshot z",
                    format!("{z_shape:?} with {} rows", x_shape.0),
                    format!("{zs:?} at index {i}"),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Snapshot<T>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Snapshot<T>> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &Snapshot<T> {
        &self.entries[i]
    }

    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|s| s.t).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.entries[0].x.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.entries[0].x.cols()
    }

    pub fn exo_dim(&self) -> usize {
        self.entries[0].z.as_ref().map_or(0, Dense::cols)
    }

    /// Keeps the entries at `indices` (must be strictly increasing).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.entries[i].clone()).collect())
    }

    /// Contiguous sub-range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        Self::new(self.entries[start..end].to_vec())
    }
}

/// Splits a sequence in time into train/val/test with `floor(0.8 n)` and
/// `floor(0.1 n)` snapshots for the first two parts and the remainder for
/// test. The last snapshot of the preceding part is prepended to val and
/// test as the observed initial condition of their first interval; it is
/// not a prediction target.
pub fn temporal_split<T: Scalar>(
    seq: &SnapshotSequence<T>,
) -> Result<(SnapshotSequence<T>, SnapshotSequence<T>, SnapshotSequence<T>)> {
    let n = seq.len();
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let n_test = n - n_train - n_val;
    if n_train < 2 || n_val < 1 || n_test < 1 {
        return Err(Error::invalid(
            "count",
            format!("{n} snapshots are too few for an 80/10/10 split (need >= 10)"),
        ));
    }
    Ok((
        seq.slice(0, n_train)?,
        seq.slice(n_train - 1, n_train + n_val)?,
        seq.slice(n_train + n_val - 1, n)?,
    ))
}
