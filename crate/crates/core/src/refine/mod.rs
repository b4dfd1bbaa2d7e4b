//! Frequency-band and structure-aware scaling of U-Net decoder features.
//!
//! Skip features `h` get their high-frequency band scaled by `s` through a
//! center-shifted 2D FFT. Backbone features `x` are first multiplied by a gain
//! map `α ∈ [1, m]` built from the normalized channel mean, then have their
//! high-frequency band scaled by `b`. Only decoder blocks 0 and 1 (counted from
//! the bottleneck) are touched.

mod mask;
mod params;

pub use mask::{central_region_mask, in_central_region, is_low_band, BandMask};
pub use params::{ChannelScope, RefineParams, DEFAULT_EPS};

use crate::error::{Error, Result};
use crate::tensor::{fft2_shifted, ifft2_shifted, FeatureMap};

/// Number of decoder blocks, counted from the bottleneck, that are refined.
pub const HOOKED_BLOCKS: usize = 2;

/// Scales each `(b, c)` plane's spectrum by `mask` and returns to the spatial domain.
pub fn fourier_band_scale(x: &FeatureMap, mask: &BandMask) -> Result<FeatureMap> {
    let dims = x.dims();
    if mask.height() != dims.height || mask.width() != dims.width {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} vs feature planes {}x{}",
            mask.height(),
            mask.width(),
            dims.height,
            dims.width
        )));
    }
    let mut spectrum = fft2_shifted(x);
    spectrum.scale_planes(mask.gains())?;
    ifft2_shifted(&spectrum)
}

/// Per-batch structure gain maps, `B` planes of `H·W` values in `[1, m]`.
///
/// For each batch element the channel mean is min-max normalized over its
/// spatial plane and mapped to `(m - 1)·norm + 1`. A plane whose range is
/// below `eps` gets a gain of exactly 1.
pub fn structure_gain_map(x: &FeatureMap, m: f64, eps: f64) -> Result<Vec<f64>> {
    if !(m.is_finite() && m >= 1.0) {
        return Err(Error::InvalidParam(format!("m must be >= 1, got {m}")));
    }
    let dims = x.dims();
    let n = dims.plane_len();
    let mut gains = Vec::with_capacity(dims.batch * n);
    for b in 0..dims.batch {
        let mut mean = vec![0.0f64; n];
        for c in 0..dims.channels {
            for (acc, &v) in mean.iter_mut().zip(x.plane(b, c)) {
                *acc += f64::from(v);
            }
        }
        let inv_c = 1.0 / dims.channels as f64;
        mean.iter_mut().for_each(|v| *v *= inv_c);
        let (lo, hi) = mean
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        if range < eps || range == 0.0 {
            gains.extend(std::iter::repeat_n(1.0, n));
        } else {
            gains.extend(mean.iter().map(|&v| (m - 1.0) * (v - lo) / range + 1.0));
        }
    }
    Ok(gains)
}

/// Structure-aware backbone amplification over every channel.
pub fn structure_scale(x: &FeatureMap, m: f64, eps: f64) -> Result<FeatureMap> {
    structure_scale_scoped(x, m, eps, ChannelScope::All)
}

pub fn structure_scale_scoped(
    x: &FeatureMap,
    m: f64,
    eps: f64,
    scope: ChannelScope,
) -> Result<FeatureMap> {
    let gains = structure_gain_map(x, m, eps)?;
    if m == 1.0 {
        return Ok(x.clone());
    }
    let dims = x.dims();
    let n = dims.plane_len();
    let scaled_channels = match scope {
        ChannelScope::All => dims.channels,
        ChannelScope::FirstHalf => dims.channels / 2,
    };
    let mut data = x.data().to_vec();
    for b in 0..dims.batch {
        let alpha = &gains[b * n..(b + 1) * n];
        if alpha.iter().all(|&a| a == 1.0) {
            continue;
        }
        for c in 0..scaled_channels {
            let start = (b * dims.channels + c) * n;
            for (v, &a) in data[start..start + n].iter_mut().zip(alpha) {
                *v = (f64::from(*v) * a) as f32;
            }
        }
    }
    FeatureMap::new(dims, data)
}

/// Scales the high-frequency band of skip features by `s`.
pub fn refine_skip(h: &FeatureMap, s: f64) -> Result<FeatureMap> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidParam(format!("s must be > 0, got {s}")));
    }
    if s == 1.0 {
        return Ok(h.clone());
    }
    let dims = h.dims();
    fourier_band_scale(h, &central_region_mask(dims.height, dims.width, 1.0, s)?)
}

/// Structure-scales backbone features by `m`, then scales their high-frequency band by `b`.
pub fn refine_backbone(x: &FeatureMap, m: f64, b: f64, eps: f64) -> Result<FeatureMap> {
    refine_backbone_scoped(x, m, b, eps, ChannelScope::All)
}

pub fn refine_backbone_scoped(
    x: &FeatureMap,
    m: f64,
    b: f64,
    eps: f64,
    scope: ChannelScope,
) -> Result<FeatureMap> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::InvalidParam(format!("b must be > 0, got {b}")));
    }
    let scaled = structure_scale_scoped(x, m, eps, scope)?;
    if b == 1.0 {
        return Ok(scaled);
    }
    let dims = scaled.dims();
    fourier_band_scale(
        &scaled,
        &central_region_mask(dims.height, dims.width, 1.0, b)?,
    )
}

/// Refines one decoder block's `(backbone, skip)` pair.
///
/// Blocks past [`HOOKED_BLOCKS`] and identity parameters return the inputs
/// unchanged, bit for bit.
pub fn apply_block(
    params: &RefineParams,
    block_index: usize,
    x: &FeatureMap,
    h: &FeatureMap,
) -> Result<(FeatureMap, FeatureMap)> {
    let Some((s, b)) = params.block_gains(block_index) else {
        return Ok((x.clone(), h.clone()));
    };
    if params.is_identity() {
        return Ok((x.clone(), h.clone()));
    }
    params.validate()?;
    let x_refined = refine_backbone_scoped(x, params.m, b, params.eps, params.scope)?;
    let h_refined = refine_skip(h, s)?;
    Ok((x_refined, h_refined))
}
