//! Matrix-smoothness-aware compression and the plain sparsifier baseline.
//!
//! The matrix-aware pair sends the sparse vector `C L^{†1/2} g` on the wire
//! and reconstructs the unbiased estimator `L^{1/2} C L^{†1/2} g` on the
//! receiving side, where `C` is a random diagonal sketch. The plain
//! (`Standard`) pair sends `C g` and embeds it densely. `Identity` is a no-op
//! used for uncompressed baselines.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::psd::SmoothnessMatrix;
use crate::sampling::{DiagonalSketch, Sampling};
use crate::{Matrix, Vector};

/// Relative tolerance of the range-membership check in matrix-aware
/// compression. Violations are hard errors: they signal a mismatch between
/// the smoothness matrix and the model producing the gradients.
pub const RANGE_TOL_REL: f64 = 1e-6;

/// Bits charged per transmitted value (the accounting convention;
/// the wire format below stores full `f64` payloads for exact replay).
pub const BITS_PER_VALUE: u64 = 32;
/// Bits charged per transmitted coordinate index.
pub const BITS_PER_INDEX: u64 = 32;

/// The wire-level compressed message: sorted `(coordinate, value)` pairs.
/// Exact zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseUpdate {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseUpdate {
    /// Builds from entries that must be strictly increasing in index and
    /// nonzero in value.
    pub fn from_entries(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut last: Option<u32> = None;
        for &(idx, val) in &entries {
            if idx as usize >= dim {
                return Err(Error::DimMismatch {
                    left: idx as usize,
                    right: dim,
                });
            }
            if let Some(prev) = last {
                if idx <= prev {
                    return Err(Error::invalid("sparse indices must be strictly increasing"));
                }
            }
            if val == 0.0 {
                return Err(Error::invalid("explicit zeros are not stored"));
            }
            last = Some(idx);
        }
        Ok(Self { dim, entries })
    }

    fn from_dense_masked(v: &Vector, sketch: &DiagonalSketch) -> Self {
        let mut entries = Vec::with_capacity(sketch.len());
        for (&j, &c) in sketch.support().iter().zip(sketch.values()) {
            let val = c * v[j];
            if val != 0.0 {
                entries.push((j as u32, val));
            }
        }
        Self {
            dim: v.len(),
            entries,
        }
    }

    fn from_dense(v: &Vector) -> Self {
        let entries = v
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(j, &x)| (j as u32, x))
            .collect();
        Self {
            dim: v.len(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Number of transmitted coordinates.
    pub fn payload_coords(&self) -> usize {
        self.entries.len()
    }

    /// Accounted bits: 32 per value plus 32 per index.
    pub fn payload_bits(&self) -> u64 {
        (BITS_PER_VALUE + BITS_PER_INDEX) * self.entries.len() as u64
    }

    /// Dense embedding (zeros off the support).
    pub fn to_dense(&self) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for &(j, v) in &self.entries {
            out[j as usize] = v;
        }
        out
    }

    /// Scales every stored value componentwise, dropping entries that become
    /// exact zeros.
    pub fn scaled(&self, weights: &Vector) -> Result<Self> {
        if weights.len() != self.dim {
            return Err(Error::DimMismatch {
                left: weights.len(),
                right: self.dim,
            });
        }
        let entries = self
            .entries
            .iter()
            .map(|&(j, v)| (j, v * weights[j as usize]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        Ok(Self {
            dim: self.dim,
            entries,
        })
    }

    /// Little-endian wire form: `u32 dim, u32 count`, then
    /// `count x (u32 index, f64 value)`. Round-trips bit-exactly.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 12 * self.entries.len());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for &(j, v) in &self.entries {
            out.extend_from_slice(&j.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let take_u32 = |b: &[u8], at: usize| -> Result<u32> {
            b.get(at..at + 4)
                .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
                .ok_or_else(|| Error::invalid("truncated sparse update"))
        };
        let dim = take_u32(bytes, 0)? as usize;
        let count = take_u32(bytes, 4)? as usize;
        if bytes.len() != 8 + 12 * count {
            return Err(Error::invalid("sparse update length mismatch"));
        }
        let mut entries = Vec::with_capacity(count);
        for k in 0..count {
            let at = 8 + 12 * k;
            let idx = take_u32(bytes, at)?;
            let val = f64::from_le_bytes(bytes[at + 4..at + 12].try_into().unwrap());
            entries.push((idx, val));
        }
        Self::from_entries(dim, entries)
    }
}

/// An unbiased compressor: matrix-aware, plain sparsifier, or identity.
#[derive(Debug, Clone)]
pub enum Compressor {
    /// Sends `C L^{†1/2} g`, decompresses as `L^{1/2} C L^{†1/2} g`.
    MatrixAware {
        matrix: Arc<SmoothnessMatrix>,
        sampling: Sampling,
    },
    /// Sends `C g`, decompresses by dense embedding.
    Standard { sampling: Sampling },
    /// Dense copy; `omega = 0`.
    Identity { dim: usize },
}

impl Compressor {
    pub fn matrix_aware(matrix: Arc<SmoothnessMatrix>, sampling: Sampling) -> Result<Self> {
        if matrix.dim() != sampling.dim() {
            return Err(Error::DimMismatch {
                left: matrix.dim(),
                right: sampling.dim(),
            });
        }
        Ok(Self::MatrixAware { matrix, sampling })
    }

    pub fn standard(sampling: Sampling) -> Self {
        Self::Standard { sampling }
    }

    pub fn identity(dim: usize) -> Self {
        Self::Identity { dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::MatrixAware { matrix, .. } => matrix.dim(),
            Self::Standard { sampling } => sampling.dim(),
            Self::Identity { dim } => *dim,
        }
    }

    /// Variance bound `omega = max_j 1/p_j - 1` of the underlying sketch.
    pub fn omega(&self) -> f64 {
        match self {
            Self::MatrixAware { sampling, .. } | Self::Standard { sampling } => sampling.omega(),
            Self::Identity { .. } => 0.0,
        }
    }

    pub fn sampling(&self) -> Option<&Sampling> {
        match self {
            Self::MatrixAware { sampling, .. } | Self::Standard { sampling } => Some(sampling),
            Self::Identity { .. } => None,
        }
    }

    /// Draws the sketch used by [`Self::compress_with`]; `None` for identity.
    pub fn draw_sketch<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<DiagonalSketch> {
        self.sampling().map(|s| s.draw(rng))
    }

    /// Compresses `g`, drawing a fresh sketch from `rng`.
    pub fn compress<R: Rng + ?Sized>(&self, g: &Vector, rng: &mut R) -> Result<SparseUpdate> {
        match self.draw_sketch(rng) {
            Some(sketch) => self.compress_with(&sketch, g),
            None => Ok(SparseUpdate::from_dense(g)),
        }
    }

    /// Compresses `g` under a caller-supplied sketch (used when one draw is
    /// applied to several vectors in the same round).
    pub fn compress_with(&self, sketch: &DiagonalSketch, g: &Vector) -> Result<SparseUpdate> {
        if g.len() != self.dim() {
            return Err(Error::DimMismatch {
                left: g.len(),
                right: self.dim(),
            });
        }
        match self {
            Self::Identity { .. } => Ok(SparseUpdate::from_dense(g)),
            Self::Standard { .. } => Ok(SparseUpdate::from_dense_masked(g, sketch)),
            Self::MatrixAware { matrix, .. } => {
                let dist = matrix.range_distance(g);
                let tol = RANGE_TOL_REL * g.norm();
                if dist > tol {
                    return Err(Error::OutOfRange { dist, tol });
                }
                // Dense L^{†1/2} g first, then mask; payload counts only the
                // masked entries.
                let v = matrix.apply_pinv_sqrt(g);
                Ok(SparseUpdate::from_dense_masked(&v, sketch))
            }
        }
    }

    /// Reconstructs the unbiased estimate from a wire message.
    pub fn decompress(&self, u: &SparseUpdate) -> Result<Vector> {
        if u.dim() != self.dim() {
            return Err(Error::DimMismatch {
                left: u.dim(),
                right: self.dim(),
            });
        }
        match self {
            Self::Identity { .. } | Self::Standard { .. } => Ok(u.to_dense()),
            Self::MatrixAware { matrix, .. } => {
                let mut out = Vector::zeros(u.dim());
                for &(j, v) in u.entries() {
                    matrix.sqrt_column_axpy(j as usize, v, &mut out);
                }
                Ok(out)
            }
        }
    }

    /// The second-moment matrix `E[C L C] = P̄ ∘ L` (with `L = I` for the
    /// plain sparsifier). Unsupported for identity.
    pub fn second_moment_matrix(&self) -> Result<Matrix> {
        match self {
            Self::Identity { .. } => Err(Error::UnsupportedMode),
            Self::Standard { sampling } => {
                let pm = sampling.probability_matrices();
                crate::psd::hadamard(&pm.pbar, &Matrix::identity(sampling.dim(), sampling.dim()))
            }
            Self::MatrixAware { matrix, sampling } => {
                let pm = sampling.probability_matrices();
                crate::psd::hadamard(&pm.pbar, &matrix.to_dense())
            }
        }
    }
}
