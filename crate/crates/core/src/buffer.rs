//! Fixed-capacity FIFO of detached latent prototypes.
//!
//! Storage is a single preallocated `capacity x dim` block used as a ring, so
//! the memory footprint never depends on how many vectors have been pushed.
//! Entries are value copies; nothing stored here can alias model parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{l2_normalize, BatchTensor3, Matrix};

/// Epsilon used when normalizing prototypes before they are enqueued.
pub const PROTOTYPE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBuffer {
    capacity: usize,
    dim: usize,
    storage: Vec<f64>,
    // Slot index of the oldest entry.
    head: usize,
    len: usize,
}

impl FeatureBuffer {
    /// Creates an empty buffer holding at most `capacity` vectors of length `dim`.
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature buffer needs capacity >= 1 and dim >= 1 (got {capacity}, {dim})"
            )));
        }
        Ok(Self {
            capacity,
            dim,
            storage: vec![0.0; capacity * dim],
            head: 0,
            len: 0,
        })
    }

    #[inline]
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_full(&self) -> bool {
        self.len == self.capacity
    }

    /// Number of `f64` slots reserved by the buffer. Constant for its lifetime.
    pub fn footprint(&self) -> usize {
        self.storage.len()
    }

    /// Appends `feature` as the newest entry, evicting the oldest when full.
    pub fn push(&mut self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.dim {
            return Err(Error::shape(
                "FeatureBuffer::push",
                format!("buffer dim {}", self.dim),
                format!("feature of length {}", feature.len()),
            ));
        }
        let slot = if self.len < self.capacity {
            let s = (self.head + self.len) % self.capacity;
            self.len += 1;
            s
        } else {
            let s = self.head;
            self.head = (self.head + 1) % self.capacity;
            s
        };
        self.storage[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(feature);
        Ok(())
    }

    /// Entry `i`, counted from the oldest (`0`) to the newest (`len - 1`).
    pub fn entry(&self, i: usize) -> &[f64] {
        assert!(i < self.len, "buffer index {i} out of range (len {})", self.len);
        let slot = (self.head + i) % self.capacity;
        &self.storage[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Oldest-first iterator over stored entries.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len).map(move |i| self.entry(i))
    }

    /// Current entries as a `len x dim` matrix, oldest first.
    pub fn to_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.len * self.dim);
        for e in self.iter() {
            data.extend_from_slice(e);
        }
        Matrix::from_vec(self.len, self.dim, data).expect("consistent buffer layout")
    }

    /// Entries replicated along a leading batch axis: `batch x len x dim`.
    pub fn stacked(&self, batch: usize) -> Result<BatchTensor3> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let m = self.to_matrix();
        let slices = vec![m; batch];
        BatchTensor3::from_slices(&slices)
    }

    /// Dense `capacity x dim` block in oldest-first order, zero padded past `len`.
    pub fn snapshot(&self) -> BufferSnapshot {
        let mut block = vec![0.0; self.capacity * self.dim];
        for (i, e) in self.iter().enumerate() {
            block[i * self.dim..(i + 1) * self.dim].copy_from_slice(e);
        }
        BufferSnapshot {
            capacity: self.capacity,
            dim: self.dim,
            fill: self.len,
            block,
        }
    }

    pub fn from_snapshot(snap: &BufferSnapshot) -> Result<Self> {
        if snap.fill > snap.capacity || snap.block.len() != snap.capacity * snap.dim {
            return Err(Error::InvalidArgument(format!(
                "inconsistent buffer snapshot: capacity {}, dim {}, fill {}, {} values",
                snap.capacity,
                snap.dim,
                snap.fill,
                snap.block.len()
            )));
        }
        let mut buf = Self::new(snap.capacity, snap.dim)?;
        for i in 0..snap.fill {
            buf.push(&snap.block[i * snap.dim..(i + 1) * snap.dim])?;
        }
        Ok(buf)
    }
}

/// Serializable form of a [`FeatureBuffer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSnapshot {
    pub capacity: usize,
    pub dim: usize,
    pub fill: usize,
    pub block: Vec<f64>,
}

/// Elementwise mean of `features`, optionally l2-normalized with `eps`.
pub fn segment_prototype<F: AsRef<[f64]>>(features: &[F], normalize: bool, eps: f64) -> Result<Vec<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::EmptySegment("no features to average into a prototype".into()))?;
    let dim = first.as_ref().len();
    let mut sum = vec![0.0; dim];
    for (i, f) in features.iter().enumerate() {
        let f = f.as_ref();
        if f.len() != dim {
            return Err(Error::shape(
                "segment_prototype",
                format!("feature 0 has length {dim}"),
                format!("feature {i} has length {}", f.len()),
            ));
        }
        for (s, v) in sum.iter_mut().zip(f) {
            *s += v;
        }
    }
    let n = features.len() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    Ok(if normalize { l2_normalize(&mean, eps) } else { mean })
}

/// Row mean of a feature matrix; the matrix form of [`segment_prototype`].
pub fn matrix_prototype(features: &Matrix, normalize: bool, eps: f64) -> Result<Vec<f64>> {
    if features.rows() == 0 {
        return Err(Error::EmptySegment("no features to average into a prototype".into()));
    }
    let rows: Vec<&[f64]> = (0..features.rows()).map(|r| features.row(r)).collect();
    segment_prototype(&rows, normalize, eps)
}
