//! Rank-4 feature tensors, their center-shifted spectra, and the FMAP file format.

mod fft;
mod fmap;

pub use fft::{fft2_shifted, ifft2_shifted, SpectrumMap};
pub use fmap::{decode_fmap, encode_fmap, read_fmap, write_fmap, FMAP_MAGIC, FMAP_VERSION};
pub use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Shape of a `(B, C, H, W)` tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            batch,
            channels,
            height,
            width,
        }
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    pub const fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub const fn slice_count(&self) -> usize {
        self.batch * self.channels
    }

    /// Total element count, or `None` on overflow.
    pub fn checked_len(&self) -> Option<usize> {
        self.batch
            .checked_mul(self.channels)?
            .checked_mul(self.height)?
            .checked_mul(self.width)
    }

    pub fn len(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Expands a flat row-major offset into `(b, c, y, x)`.
    pub fn unravel(&self, mut offset: usize) -> [usize; 4] {
        let x = offset % self.width;
        offset /= self.width;
        let y = offset % self.height;
        offset /= self.height;
        let c = offset % self.channels;
        let b = offset / self.channels;
        [b, c, y, x]
    }

    pub fn with_channels(&self, channels: usize) -> Self {
        Self { channels, ..*self }
    }

    pub fn with_spatial(&self, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidDims(self.as_array()));
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.height, self.width
        )
    }
}

/// Real-valued `(B, C, H, W)` feature tensor, row-major, 32-bit storage.
///
/// Construction rejects empty dims, length mismatches and non-finite values, so
/// every `FeatureMap` in circulation is finite. Values are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dims: Dims,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        let expected = dims
            .checked_len()
            .ok_or(Error::InvalidDims(dims.as_array()))?;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                dims: dims.as_array(),
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: dims.unravel(i),
                value: data[i],
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.checked_len().unwrap_or(0)])
    }

    /// Builds a map by evaluating `f(b, c, y, x)` at every position.
    pub fn from_fn(
        dims: Dims,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        dims.validate()?;
        let mut data = Vec::with_capacity(dims.len());
        for b in 0..dims.batch {
            for c in 0..dims.channels {
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        data.push(f(b, c, y, x));
                    }
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> f32 {
        let d = self.dims;
        self.data[((b * d.channels + c) * d.height + y) * d.width + x]
    }

    /// The `(b, c)` spatial plane, `H·W` values row-major.
    pub fn plane(&self, b: usize, c: usize) -> &[f32] {
        let n = self.dims.plane_len();
        let start = (b * self.dims.channels + c) * n;
        &self.data[start..start + n]
    }

    /// Iterates over all `(b, c)` planes in storage order.
    pub fn planes(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims.plane_len())
    }

    /// Elementwise map producing a new validated tensor.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two equally shaped maps.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                self.dims, other.dims
            )));
        }
        Self::new(
            self.dims,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f32> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    /// True when both maps have the same dims and identical bit patterns.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Concatenates two maps along the channel axis.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        let (a, b) = (self.dims, other.dims);
        if a.batch != b.batch || a.height != b.height || a.width != b.width {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {a} and {b} along channels"
            )));
        }
        let dims = a.with_channels(a.channels + b.channels);
        let (na, nb) = (a.channels * a.plane_len(), b.channels * b.plane_len());
        let mut data = Vec::with_capacity(dims.len());
        for batch in 0..a.batch {
            data.extend_from_slice(&self.data[batch * na..(batch + 1) * na]);
            data.extend_from_slice(&other.data[batch * nb..(batch + 1) * nb]);
        }
        Ok(Self { dims, data })
    }
}
