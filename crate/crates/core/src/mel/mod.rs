//! Waveform → log-mel spectrogram, plus grayscale heatmap output.

mod image;

pub use self::image::{encode_png, quantize, render_png};

use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::{Dims, FeatureMap};

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParam("sample rate must be > 0".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Reads a PCM16 or float32 WAV file, averaging stereo down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedAudio(format!("{channels} channels")));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<_, _>>()?,
        (format, bits) => {
            return Err(Error::UnsupportedAudio(format!(
                "{format:?} at {bits} bits"
            )));
        }
    };
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|f| ((f64::from(f[0]) + f64::from(f[1])) * 0.5) as f32)
            .collect()
    };
    Waveform::new(samples, spec.sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self::with_sample_rate(16_000)
    }
}

impl MelConfig {
    /// Defaults (1024-point FFT, hop 160, 64 bands) spanning `0..sr/2`.
    pub fn with_sample_rate(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            n_fft: 1024,
            hop: 160,
            n_mels: 64,
            f_min: 0.0,
            f_max: f64::from(sample_rate) / 2.0,
            log_floor: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if self.sample_rate == 0 || self.n_fft < 2 || self.hop == 0 || self.n_mels == 0 {
            return Err(Error::InvalidConfig(format!(
                "degenerate mel config {self:?}"
            )));
        }
        if self.hop > self.n_fft {
            return Err(Error::InvalidConfig(format!(
                "hop {} exceeds n_fft {}",
                self.hop, self.n_fft
            )));
        }
        if !(0.0 <= self.f_min && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {} and {}",
                self.f_min, self.f_max
            )));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return Err(Error::InvalidConfig("log_floor must be > 0".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for `len` samples under center padding.
    pub fn frame_count(&self, len: usize) -> usize {
        let pad = self.n_fft / 2;
        1 + (len + 2 * pad - self.n_fft) / self.hop
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Dense row-major 2D map, e.g. `n_mels × frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Map2d {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Map2d {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} map",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// As a `1×1×rows×cols` feature map.
    pub fn to_feature_map(&self) -> Result<FeatureMap> {
        FeatureMap::new(Dims::new(1, 1, self.rows, self.cols), self.data.clone())
    }

    /// The `(b, c)` plane of a feature map.
    pub fn from_plane(x: &FeatureMap, b: usize, c: usize) -> Result<Self> {
        let d = x.dims();
        if b >= d.batch || c >= d.channels {
            return Err(Error::ShapeMismatch(format!(
                "plane ({b}, {c}) outside {d}"
            )));
        }
        Self::new(d.height, d.width, x.plane(b, c).to_vec())
    }
}

/// Triangular HTK filterbank, `n_mels` rows over `n_fft/2 + 1` FFT bins.
///
/// Filter edges and peaks are `n_mels + 2` points equally spaced in mel between
/// `f_min` and `f_max`. Each FFT bin is weighted by where its center frequency
/// falls on the triangle, and each row is scaled so its largest weight is 1.
pub fn mel_filterbank(cfg: &MelConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let bin_hz = f64::from(cfg.sample_rate) / cfg.n_fft as f64;
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let mut bank = Vec::with_capacity(cfg.n_mels);
    for (m, tri) in edges.windows(3).enumerate() {
        let (left, center, right) = (tri[0], tri[1], tri[2]);
        let mut row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                }
            })
            .collect();
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mel band {m} ({left:.1}-{right:.1} Hz) contains no FFT bin; reduce n_mels or raise n_fft"
            )));
        }
        row.iter_mut().for_each(|w| *w /= peak);
        bank.push(row);
    }
    Ok(bank)
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn reflect(i: isize, len: usize) -> usize {
    let last = len as isize - 1;
    let r = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    r as usize
}

/// Power STFT frames, `frames × (n_fft/2 + 1)`, reflect center-padded.
pub fn power_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::UnsupportedAudio(format!(
            "sample rate {} differs from configured {}; resample first",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let len = w.samples.len();
    if len < cfg.n_fft {
        return Err(Error::InvalidParam(format!(
            "clip of {len} samples is shorter than one {}-sample frame",
            cfg.n_fft
        )));
    }
    let pad = (cfg.n_fft / 2) as isize;
    let window = hann_window(cfg.n_fft);
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex64::default(); cfg.n_fft];
    let frames = cfg.frame_count(len);
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = (f * cfg.hop) as isize - pad;
        for (i, (slot, &wv)) in buf.iter_mut().zip(&window).enumerate() {
            let s = w.samples[reflect(start + i as isize, len)];
            *slot = Complex64::new(f64::from(s) * wv, 0.0);
        }
        fft.process(&mut buf);
        out.push(buf[..cfg.n_bins()].iter().map(|c| c.norm_sqr()).collect());
    }
    Ok(out)
}

/// Log-mel spectrogram, `n_mels × frames`, natural log of `max(power, log_floor)`.
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<Map2d> {
    let bank = mel_filterbank(cfg)?;
    let power = power_spectrogram(w, cfg)?;
    let frames = power.len();
    let mut data = vec![0.0f32; cfg.n_mels * frames];
    for (t, spec) in power.iter().enumerate() {
        for (m, row) in bank.iter().enumerate() {
            let e: f64 = row.iter().zip(spec).map(|(a, b)| a * b).sum();
            data[m * frames + t] = e.max(cfg.log_floor).ln() as f32;
        }
    }
    Map2d::new(cfg.n_mels, frames, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_anchors() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        let expect = 2595.0 * (1.0f64 + 1000.0 / 700.0).log10();
        assert!((hz_to_mel(1000.0) - expect).abs() < 1e-12);
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.2);
        assert!((mel_to_hz(hz_to_mel(4321.0)) - 4321.0).abs() < 1e-9);
    }

    #[test]
    fn filter_rows_are_unimodal_with_unit_peak() {
        let bank = mel_filterbank(&MelConfig::default()).unwrap();
        assert_eq!(bank.len(), 64);
        for row in &bank {
            assert_eq!(row.len(), 513);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert_eq!(row.iter().cloned().fold(0.0, f64::max), 1.0);
            let peak = row.iter().position(|&w| w == 1.0).unwrap();
            assert!(row[..=peak].windows(2).all(|p| p[0] <= p[1]));
            assert!(row[peak..].windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn interior_bins_are_covered() {
        let cfg = MelConfig::default();
        let bank = mel_filterbank(&cfg).unwrap();
        let bin_hz = 16_000.0 / 1024.0;
        for k in 1..cfg.n_bins() - 1 {
            let f = k as f64 * bin_hz;
            assert!(f > cfg.f_min && f < cfg.f_max);
            let col: f64 = bank.iter().map(|r| r[k]).sum();
            assert!(col > 0.0, "bin {k} uncovered");
        }
    }

    #[test]
    fn too_many_mels_is_an_error() {
        let cfg = MelConfig {
            n_fft: 64,
            n_mels: 128,
            ..MelConfig::default()
        };
        assert!(matches!(mel_filterbank(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn config_validation() {
        let d = MelConfig::default();
        assert!(MelConfig { hop: 2048, ..d }.validate().is_err());
        assert!(MelConfig { f_max: 9000.0, ..d }.validate().is_err());
        assert!(MelConfig { f_min: 8000.0, ..d }.validate().is_err());
        assert!(d.validate().is_ok());
    }

    #[test]
    fn one_second_gives_101_frames() {
        let cfg = MelConfig::default();
        let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        let m = mel_spectrogram(&w, &cfg).unwrap();
        assert_eq!((m.rows, m.cols), (64, 101));
        let floor = (1e-5f64).ln() as f32;
        assert!(m.data.iter().all(|&v| v == floor));
    }

    #[test]
    fn short_or_mismatched_clips_rejected() {
        let cfg = MelConfig::default();
        let short = Waveform::new(vec![0.0; 1000], 16_000).unwrap();
        assert!(mel_spectrogram(&short, &cfg).is_err());
        let wrong_rate = Waveform::new(vec![0.0; 48_000], 48_000).unwrap();
        assert!(matches!(
            mel_spectrogram(&wrong_rate, &cfg),
            Err(Error::UnsupportedAudio(_))
        ));
    }
}
