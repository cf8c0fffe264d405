//! Dense row-major storage for a list of equal-dimension real vectors.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointsError {
    #[error("point {index} has dimension {found}, expected {expected}")]
    RaggedRows {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("points must have dimension >= 1")]
    ZeroDimension,
    #[error("flat buffer of length {len} is not a multiple of dimension {dim}")]
    BadBuffer { len: usize, dim: usize },
}

/// `len()` points of dimension `dim()`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Result<Self, PointsError> {
        if dim == 0 {
            return Err(PointsError::ZeroDimension);
        }
        Ok(Self {
            dim,
            data: Vec::new(),
        })
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self, PointsError> {
        if dim == 0 {
            return Err(PointsError::ZeroDimension);
        }
        if data.len() % dim != 0 {
            return Err(PointsError::BadBuffer {
                len: data.len(),
                dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, PointsError> {
        let dim = rows.first().map_or(1, |r| r.as_ref().len());
        let mut points = Self::new(dim)?;
        for row in rows {
            points.push(row.as_ref())?;
        }
        Ok(points)
    }

    /// Scalars as one-dimensional points.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn push(&mut self, row: &[f64]) -> Result<(), PointsError> {
        if row.len() != self.dim {
            return Err(PointsError::RaggedRows {
                index: self.len(),
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Keeps coordinates `range` of every point.
    pub fn columns(&self, range: std::ops::Range<usize>) -> Points {
        assert!(range.end <= self.dim && range.start < range.end);
        let dim = range.end - range.start;
        let mut data = Vec::with_capacity(self.len() * dim);
        for row in self.rows() {
            data.extend_from_slice(&row[range.clone()]);
        }
        Points { dim, data }
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points {
            dim: self.dim,
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
