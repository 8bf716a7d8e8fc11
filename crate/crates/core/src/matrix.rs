//! Dense row-major containers for input objects, class labels and embeddings.

use crate::error::{Error, Result};

/// `n` objects of dimensionality `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    /// Wraps `values` as an `n x d` matrix, rejecting non-finite entries and
    /// matrices with fewer than two rows or zero columns.
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidData(format!(
                "a data matrix needs at least 2 rows, got {n}"
            )));
        }
        if d < 1 {
            return Err(Error::InvalidData("a data matrix needs at least 1 column".into()));
        }
        if values.len() != n * d {
            return Err(Error::InvalidData(format!(
                "expected {} values for a {n}x{d} matrix, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value {} at row {}, column {}",
                values[pos],
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::InvalidData(format!(
                "row {i} has {} columns, expected {d}",
                r.len()
            )));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.d)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.d, values)
    }
}

/// Integer class ids, one per object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector(pub Vec<i64>);

impl LabelVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::InvalidData(format!(
                "label count {} does not match object count {n}",
                self.0.len()
            )));
        }
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self(indices.iter().map(|&i| self.0[i]).collect())
    }
}

/// `n` points in `dims`-dimensional space (dims is 2 or 3 for the tree paths).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    n: usize,
    dims: usize,
    coords: Vec<f64>,
}

impl Embedding {
    pub fn new(n: usize, dims: usize, coords: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidData("embedding needs at least 1 dimension".into()));
        }
        if coords.len() != n * dims {
            return Err(Error::InvalidData(format!(
                "expected {} coordinates for {n} points in {dims} dimensions, got {}",
                n * dims,
                coords.len()
            )));
        }
        Ok(Self { n, dims, coords })
    }

    pub fn zeros(n: usize, dims: usize) -> Self {
        Self {
            n,
            dims,
            coords: vec![0.0; n * dims],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }

    /// Shifts every point by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        assert_eq!(offset.len(), self.dims);
        let mut out = self.clone();
        for p in out.coords.chunks_exact_mut(self.dims) {
            for (c, o) in p.iter_mut().zip(offset) {
                *c += o;
            }
        }
        out
    }
}

impl From<DataMatrix> for Embedding {
    fn from(m: DataMatrix) -> Self {
        Self {
            n: m.n,
            dims: m.d,
            coords: m.values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan_with_position() {
        let err = DataMatrix::new(2, 2, vec![1.0, 2.0, f64::NAN, 4.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("column 0"), "{msg}");
    }

    #[test]
    fn rejects_single_row() {
        assert!(DataMatrix::new(1, 3, vec![0.0; 3]).is_err());
        assert!(DataMatrix::new(0, 3, vec![]).is_err());
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn select_rows_keeps_order() {
        let m = DataMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let s = m.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.values(), &[3.0, 1.0]);
    }
}
