use crate::error::{Error, Result};

/// True when the shifted bin `index` of an axis of length `len` is in the
/// low-frequency band, i.e. its signed frequency `k = index - len / 2`
/// satisfies `|k| < len / 4`.
///
/// For even lengths this is the open index interval `(len/4, 3·len/4)`. The band
/// is symmetric under `k -> -k`, so a mask built from it maps real planes to
/// real planes.
pub fn is_low_band(index: usize, len: usize) -> bool {
    let k = index.abs_diff(len / 2);
    4 * k < len
}

/// True when shifted bin `(y, x)` lies in the central low-frequency rectangle.
pub fn in_central_region(y: usize, x: usize, height: usize, width: usize) -> bool {
    is_low_band(y, height) && is_low_band(x, width)
}

/// Per-bin real gains over a center-shifted `H × W` spectrum: one gain inside
/// the central low-frequency rectangle, another outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMask {
    height: usize,
    width: usize,
    lf_gain: f64,
    hf_gain: f64,
    gains: Vec<f64>,
}

impl BandMask {
    pub fn central_region(height: usize, width: usize, lf_gain: f64, hf_gain: f64) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidParam(format!(
                "band mask needs H, W >= 2, got {height}x{width}"
            )));
        }
        if !lf_gain.is_finite() || !hf_gain.is_finite() {
            return Err(Error::InvalidParam(format!(
                "band gains must be finite, got lf={lf_gain} hf={hf_gain}"
            )));
        }
        let mut gains = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                gains.push(if in_central_region(y, x, height, width) {
                    lf_gain
                } else {
                    hf_gain
                });
            }
        }
        Ok(Self {
            height,
            width,
            lf_gain,
            hf_gain,
            gains,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn lf_gain(&self) -> f64 {
        self.lf_gain
    }

    pub fn hf_gain(&self) -> f64 {
        self.hf_gain
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn gain(&self, y: usize, x: usize) -> f64 {
        self.gains[y * self.width + x]
    }

    pub fn is_identity(&self) -> bool {
        self.lf_gain == 1.0 && self.hf_gain == 1.0
    }
}

pub fn central_region_mask(
    height: usize,
    width: usize,
    lf_gain: f64,
    hf_gain: f64,
) -> Result<BandMask> {
    BandMask::central_region(height, width, lf_gain, hf_gain)
}
