//! Deterministic forward-only toy U-Net and DDIM sampler.
//!
//! The network exists to give the refinement hook the same structural context
//! it has in a latent-diffusion U-Net: a decoder that upsamples backbone
//! features and concatenates them with encoder skip features. Weights are drawn
//! from [`GaussianStream`] and never trained.

mod rng;
mod sampler;

pub use rng::GaussianStream;
pub use sampler::{ddim_sample, ddim_sample_traced, initial_noise, SampleTrace, SamplerConfig};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::refine::{apply_block, RefineParams};
use crate::tensor::{Dims, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub levels: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            base_channels: 8,
            in_channels: 1,
            height: 32,
            width: 32,
            seed: 0,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidConfig(format!(
                "levels must be >= 2 so two decoder blocks exist, got {}",
                self.levels
            )));
        }
        if self.base_channels == 0 || self.in_channels == 0 {
            return Err(Error::InvalidConfig("channel counts must be >= 1".into()));
        }
        let stride = 1usize
            .checked_shl(self.levels as u32)
            .filter(|&s| s > 0)
            .ok_or_else(|| Error::InvalidConfig(format!("levels {} too deep", self.levels)))?;
        if self.height == 0
            || self.width == 0
            || !self.height.is_multiple_of(stride)
            || !self.width.is_multiple_of(stride)
        {
            return Err(Error::InvalidConfig(format!(
                "spatial {}x{} must be a positive multiple of 2^levels = {stride}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Channel width of encoder level `level`.
    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn input_dims(&self, batch: usize) -> Dims {
        Dims::new(batch, self.in_channels, self.height, self.width)
    }
}

#[derive(Debug, Clone)]
struct Conv2d {
    out_channels: usize,
    in_channels: usize,
    kernel: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv2d {
    /// Weights ~ N(0, 1/fan_in); biases start at zero.
    fn init(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        gauss: &mut GaussianStream,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            out_channels,
            in_channels,
            kernel,
            weight: gauss.fill(out_channels * fan_in, 1.0 / (fan_in as f64).sqrt()),
            bias: vec![0.0; out_channels],
        }
    }

    /// Same-size convolution with reflect padding; accumulates in f64.
    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        let d = x.dims();
        if d.channels != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, d.channels
            )));
        }
        let (h, w, k) = (d.height, d.width, self.kernel);
        let pad = k / 2;
        let rows: Vec<Vec<usize>> = (0..k).map(|ky| reflect_table(h, ky, pad)).collect();
        let cols: Vec<Vec<usize>> = (0..k).map(|kx| reflect_table(w, kx, pad)).collect();
        let out_dims = d.with_channels(self.out_channels);
        let mut out = Vec::with_capacity(out_dims.len());
        let mut acc = vec![0.0f64; h * w];
        for b in 0..d.batch {
            for o in 0..self.out_channels {
                acc.fill(f64::from(self.bias[o]));
                for i in 0..self.in_channels {
                    let plane = x.plane(b, i);
                    for (ky, ry) in rows.iter().enumerate() {
                        for (kx, cx) in cols.iter().enumerate() {
                            let wgt = f64::from(
                                self.weight[((o * self.in_channels + i) * k + ky) * k + kx],
                            );
                            for (y, &sy) in ry.iter().enumerate() {
                                let src = &plane[sy * w..sy * w + w];
                                let dst = &mut acc[y * w..y * w + w];
                                for (dv, &c) in dst.iter_mut().zip(cx) {
                                    *dv += wgt * f64::from(src[c]);
                                }
                            }
                        }
                    }
                }
                out.extend(acc.iter().map(|&v| v as f32));
            }
        }
        FeatureMap::new(out_dims, out)
    }

    fn hash_into(&self, hasher: &mut Sha256) {
        for v in self.weight.iter().chain(&self.bias) {
            hasher.update(v.to_le_bytes());
        }
    }
}

/// Source index for output position `i` and kernel tap `tap` under reflect padding.
fn reflect_table(len: usize, tap: usize, pad: usize) -> Vec<usize> {
    (0..len)
        .map(|i| {
            let j = i as isize + tap as isize - pad as isize;
            let last = len as isize - 1;
            let r = if j < 0 {
                -j
            } else if j > last {
                2 * last - j
            } else {
                j
            };
            r.clamp(0, last) as usize
        })
        .collect()
}

fn relu(x: FeatureMap) -> Result<FeatureMap> {
    let dims = x.dims();
    FeatureMap::new(
        dims,
        x.into_data().into_iter().map(|v| v.max(0.0)).collect(),
    )
}

fn mean_pool2(x: &FeatureMap) -> Result<FeatureMap> {
    let d = x.dims();
    let (h2, w2) = (d.height / 2, d.width / 2);
    let mut out = Vec::with_capacity(d.slice_count() * h2 * w2);
    for plane in x.planes() {
        for y in 0..h2 {
            for xx in 0..w2 {
                let s = f64::from(plane[2 * y * d.width + 2 * xx])
                    + f64::from(plane[2 * y * d.width + 2 * xx + 1])
                    + f64::from(plane[(2 * y + 1) * d.width + 2 * xx])
                    + f64::from(plane[(2 * y + 1) * d.width + 2 * xx + 1]);
                out.push((s * 0.25) as f32);
            }
        }
    }
    FeatureMap::new(d.with_spatial(h2, w2), out)
}

fn upsample2(x: &FeatureMap) -> Result<FeatureMap> {
    let d = x.dims();
    let (h2, w2) = (d.height * 2, d.width * 2);
    let mut out = Vec::with_capacity(d.slice_count() * h2 * w2);
    for plane in x.planes() {
        for y in 0..h2 {
            let row = &plane[(y / 2) * d.width..(y / 2 + 1) * d.width];
            out.extend((0..w2).map(|xx| row[xx / 2]));
        }
    }
    FeatureMap::new(d.with_spatial(h2, w2), out)
}

/// Decoder-block features before and after the refinement hook.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCapture {
    pub block: usize,
    /// Upsampled backbone features entering the block.
    pub x: FeatureMap,
    /// Skip features from the matching encoder level.
    pub h: FeatureMap,
    pub x_refined: FeatureMap,
    pub h_refined: FeatureMap,
}

#[derive(Debug, Clone)]
pub struct ToyUNet {
    cfg: UNetConfig,
    encoder: Vec<Conv2d>,
    decoder: Vec<Conv2d>,
    head: Conv2d,
}

/// Builds a toy U-Net with seeded weights.
///
/// Encoder level `l` maps to `base·2^l` channels. Decoder block `k` (block 0 is
/// next to the bottleneck) consumes the concatenation of upsampled backbone
/// features and the skip from encoder level `levels - 1 - k`, and emits that
/// level's channel width. A 1×1 head returns to `in_channels`. Weights are drawn
/// in that order from one stream.
pub fn build_unet(cfg: &UNetConfig) -> Result<ToyUNet> {
    cfg.validate()?;
    let mut gauss = GaussianStream::new(cfg.seed);
    let mut encoder = Vec::with_capacity(cfg.levels);
    let mut in_ch = cfg.in_channels;
    for level in 0..cfg.levels {
        let out = cfg.channels_at(level);
        encoder.push(Conv2d::init(out, in_ch, 3, &mut gauss));
        in_ch = out;
    }
    let mut decoder = Vec::with_capacity(cfg.levels);
    let mut backbone_ch = cfg.channels_at(cfg.levels - 1);
    for block in 0..cfg.levels {
        let skip_ch = cfg.channels_at(cfg.levels - 1 - block);
        decoder.push(Conv2d::init(skip_ch, backbone_ch + skip_ch, 3, &mut gauss));
        backbone_ch = skip_ch;
    }
    let head = Conv2d::init(cfg.in_channels, cfg.base_channels, 1, &mut gauss);
    Ok(ToyUNet {
        cfg: *cfg,
        encoder,
        decoder,
        head,
    })
}

impl ToyUNet {
    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    /// Number of decoder blocks, i.e. places the refinement hook runs.
    pub fn hook_sites(&self) -> usize {
        self.decoder.len()
    }

    /// SHA-256 over all weights and biases in build order, hex encoded.
    pub fn weight_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for conv in self.encoder.iter().chain(&self.decoder).chain([&self.head]) {
            conv.hash_into(&mut hasher);
        }
        hex(&hasher.finalize())
    }

    /// Predicts noise for `x` at time `t ∈ [0, 1]`, with the hook run at
    /// every decoder block when `params` is given.
    pub fn forward(
        &self,
        x: &FeatureMap,
        t: f64,
        params: Option<&RefineParams>,
    ) -> Result<FeatureMap> {
        self.run(x, t, params, None)
    }

    /// Like [`forward`](Self::forward) but also returns per-block hook captures.
    pub fn forward_capture(
        &self,
        x: &FeatureMap,
        t: f64,
        params: Option<&RefineParams>,
    ) -> Result<(FeatureMap, Vec<BlockCapture>)> {
        let mut captures = Vec::with_capacity(self.decoder.len());
        let out = self.run(x, t, params, Some(&mut captures))?;
        Ok((out, captures))
    }

    fn run(
        &self,
        x: &FeatureMap,
        t: f64,
        params: Option<&RefineParams>,
        mut captures: Option<&mut Vec<BlockCapture>>,
    ) -> Result<FeatureMap> {
        let d = x.dims();
        if d.channels != self.cfg.in_channels
            || d.height != self.cfg.height
            || d.width != self.cfg.width
        {
            return Err(Error::ShapeMismatch(format!(
                "input {d} does not match network {}x{}x{}",
                self.cfg.in_channels, self.cfg.height, self.cfg.width
            )));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParam(format!(
                "t must lie in [0, 1], got {t}"
            )));
        }

        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut cur = x.clone();
        for conv in &self.encoder {
            let feat = relu(conv.forward(&cur)?)?;
            cur = mean_pool2(&feat)?;
            skips.push(feat);
        }
        let bias = t as f32;
        cur = cur.map(|v| v + bias)?;

        for (block, conv) in self.decoder.iter().enumerate() {
            let up = upsample2(&cur)?;
            let skip = skips.pop().expect("one skip per decoder block");
            let joined = match params {
                Some(p) => {
                    let (xr, hr) = apply_block(p, block, &up, &skip)?;
                    let joined = xr.concat_channels(&hr)?;
                    if let Some(c) = captures.as_deref_mut() {
                        c.push(BlockCapture {
                            block,
                            x: up,
                            h: skip,
                            x_refined: xr,
                            h_refined: hr,
                        });
                    }
                    joined
                }
                None => {
                    let joined = up.concat_channels(&skip)?;
                    if let Some(c) = captures.as_deref_mut() {
                        c.push(BlockCapture {
                            block,
                            x_refined: up.clone(),
                            h_refined: skip.clone(),
                            x: up,
                            h: skip,
                        });
                    }
                    joined
                }
            };
            cur = relu(conv.forward(&joined)?)?;
        }
        self.head.forward(&cur)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a map's FMAP encoding, hex encoded.
pub fn fmap_checksum(x: &FeatureMap) -> String {
    hex(&Sha256::digest(crate::tensor::encode_fmap(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(seed: u64) -> UNetConfig {
        UNetConfig {
            levels: 2,
            base_channels: 4,
            in_channels: 1,
            height: 8,
            width: 8,
            seed,
        }
    }

    #[test]
    fn reflect_padding_indices() {
        assert_eq!(reflect_table(4, 0, 1), vec![1, 0, 1, 2]);
        assert_eq!(reflect_table(4, 1, 1), vec![0, 1, 2, 3]);
        assert_eq!(reflect_table(4, 2, 1), vec![1, 2, 3, 2]);
    }

    #[test]
    fn config_validation() {
        assert!(UNetConfig {
            levels: 1,
            ..small_cfg(0)
        }
        .validate()
        .is_err());
        assert!(UNetConfig {
            height: 10,
            ..small_cfg(0)
        }
        .validate()
        .is_err());
        assert!(UNetConfig {
            width: 0,
            ..small_cfg(0)
        }
        .validate()
        .is_err());
        assert!(small_cfg(0).validate().is_ok());
        assert!(UNetConfig::default().validate().is_ok());
    }

    #[test]
    fn weights_are_seeded() {
        let a = build_unet(&small_cfg(0)).unwrap();
        let b = build_unet(&small_cfg(0)).unwrap();
        let c = build_unet(&small_cfg(1)).unwrap();
        assert_eq!(a.weight_checksum(), b.weight_checksum());
        assert_ne!(a.weight_checksum(), c.weight_checksum());
    }

    #[test]
    fn two_level_net_has_two_hook_sites() {
        let net = build_unet(&small_cfg(3)).unwrap();
        assert_eq!(net.hook_sites(), 2);
        let x = FeatureMap::zeros(net.config().input_dims(1)).unwrap();
        let (_, caps) = net
            .forward_capture(&x, 0.5, Some(&RefineParams::tango2()))
            .unwrap();
        assert_eq!(caps.len(), 2);
        assert_eq!(caps[0].x.dims(), Dims::new(1, 8, 4, 4));
        assert_eq!(caps[0].h.dims(), Dims::new(1, 8, 4, 4));
        assert_eq!(caps[1].x.dims(), Dims::new(1, 8, 8, 8));
        assert_eq!(caps[1].h.dims(), Dims::new(1, 4, 8, 8));
    }

    #[test]
    fn zero_input_zero_time_gives_zero_output() {
        let net = build_unet(&small_cfg(5)).unwrap();
        let x = FeatureMap::zeros(net.config().input_dims(1)).unwrap();
        let y = net.forward(&x, 0.0, None).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let net = build_unet(&small_cfg(0)).unwrap();
        let wrong = FeatureMap::zeros(Dims::new(1, 2, 8, 8)).unwrap();
        assert!(net.forward(&wrong, 0.5, None).is_err());
        let x = FeatureMap::zeros(net.config().input_dims(1)).unwrap();
        assert!(net.forward(&x, 1.5, None).is_err());
    }

    #[test]
    fn pooling_and_upsampling_shapes() {
        let x =
            FeatureMap::from_fn(Dims::new(1, 1, 2, 2), |_, _, y, x| (y * 2 + x) as f32).unwrap();
        let p = mean_pool2(&x).unwrap();
        assert_eq!(p.data(), &[1.5]);
        let u = upsample2(&x).unwrap();
        assert_eq!(
            u.plane(0, 0),
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 2.0, 2.0, 3.0, 3.0]
        );
    }
}
