use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::{Dims, FeatureMap};
use crate::error::{Error, Result};

/// Imaginary residue allowed when returning to the real domain, relative to the
/// largest real magnitude of the output.
const IMAG_RESIDUE_TOL: f64 = 1e-4;

/// Center-shifted 2D spectrum of a [`FeatureMap`], one complex plane per `(b, c)`.
///
/// The DC bin of every plane sits at `(H / 2, W / 2)` (integer division).
/// Values are kept in 64-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMap {
    dims: Dims,
    data: Vec<Complex64>,
}

impl SpectrumMap {
    /// Wraps raw center-shifted spectral data.
    pub fn from_shifted(dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::LengthMismatch {
                dims: dims.as_array(),
                expected: dims.len(),
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn plane(&self, b: usize, c: usize) -> &[Complex64] {
        let n = self.dims.plane_len();
        let start = (b * self.dims.channels + c) * n;
        &self.data[start..start + n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.dims.plane_len())
    }

    /// Multiplies every plane elementwise by a real `H·W` gain table.
    pub fn scale_planes(&mut self, gains: &[f64]) -> Result<()> {
        if gains.len() != self.dims.plane_len() {
            return Err(Error::ShapeMismatch(format!(
                "gain table of {} entries for {}x{} planes",
                gains.len(),
                self.dims.height,
                self.dims.width
            )));
        }
        for plane in self.data.chunks_exact_mut(gains.len()) {
            for (v, &g) in plane.iter_mut().zip(gains) {
                *v *= g;
            }
        }
        Ok(())
    }
}

struct Plan2d {
    height: usize,
    width: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
}

impl Plan2d {
    fn new(height: usize, width: usize, inverse: bool) -> Self {
        let mut planner = FftPlanner::new();
        let (rows, cols) = if inverse {
            (
                planner.plan_fft_inverse(width),
                planner.plan_fft_inverse(height),
            )
        } else {
            (
                planner.plan_fft_forward(width),
                planner.plan_fft_forward(height),
            )
        };
        Self {
            height,
            width,
            rows,
            cols,
        }
    }

    /// In-place unnormalized 2D transform of one row-major plane.
    fn process(&self, plane: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let (h, w) = (self.height, self.width);
        self.rows.process(plane);
        scratch.clear();
        scratch.resize(h * w, Complex64::default());
        transpose(plane, scratch, h, w);
        self.cols.process(scratch);
        transpose(scratch, plane, w, h);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Moves the DC bin from `(0, 0)` to `(H / 2, W / 2)`.
fn shift_plane(src: &[Complex64], dst: &mut [Complex64], h: usize, w: usize) {
    for y in 0..h {
        let sy = (y + h / 2) % h;
        for x in 0..w {
            dst[sy * w + (x + w / 2) % w] = src[y * w + x];
        }
    }
}

/// Inverse of [`shift_plane`], valid for odd sizes too.
fn unshift_plane(src: &[Complex64], dst: &mut [Complex64], h: usize, w: usize) {
    for y in 0..h {
        let sy = (y + h / 2) % h;
        for x in 0..w {
            dst[y * w + x] = src[sy * w + (x + w / 2) % w];
        }
    }
}

/// Unnormalized 2D DFT of each `(b, c)` plane followed by a center shift.
pub fn fft2_shifted(x: &FeatureMap) -> SpectrumMap {
    let dims = x.dims();
    let (h, w) = (dims.height, dims.width);
    let plan = Plan2d::new(h, w, false);
    let mut data = vec![Complex64::default(); dims.len()];
    let mut work = vec![Complex64::default(); h * w];
    let mut scratch = Vec::new();
    for (src, dst) in x.planes().zip(data.chunks_exact_mut(h * w)) {
        for (o, &v) in work.iter_mut().zip(src) {
            *o = Complex64::new(f64::from(v), 0.0);
        }
        plan.process(&mut work, &mut scratch);
        shift_plane(&work, dst, h, w);
    }
    SpectrumMap { dims, data }
}

/// Inverse of [`fft2_shifted`], including the `1/(H·W)` normalization.
///
/// Fails with [`Error::ImaginaryResidue`] when the result is not real to within
/// `1e-4` of its largest real magnitude.
pub fn ifft2_shifted(spectrum: &SpectrumMap) -> Result<FeatureMap> {
    let dims = spectrum.dims;
    let (h, w) = (dims.height, dims.width);
    let plan = Plan2d::new(h, w, true);
    let norm = 1.0 / (h * w) as f64;
    let mut work = vec![Complex64::default(); h * w];
    let mut scratch = Vec::new();
    let mut real = Vec::with_capacity(dims.len());
    let (mut real_max, mut imag_max) = (0.0f64, 0.0f64);
    for plane in spectrum.planes() {
        unshift_plane(plane, &mut work, h, w);
        plan.process(&mut work, &mut scratch);
        for v in &work {
            let v = v * norm;
            real_max = real_max.max(v.re.abs());
            imag_max = imag_max.max(v.im.abs());
            real.push(v.re);
        }
    }
    // Absolute floor keeps all-zero outputs from tripping on round-off.
    if imag_max > IMAG_RESIDUE_TOL * real_max + 1e-12 {
        return Err(Error::ImaginaryResidue { imag_max, real_max });
    }
    FeatureMap::new(dims, real.into_iter().map(|v| v as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> FeatureMap {
        FeatureMap::from_fn(Dims::new(1, 1, h, w), |_, _, y, x| f(y, x)).unwrap()
    }

    #[test]
    fn constant_plane_is_pure_dc() {
        let s = fft2_shifted(&map(4, 4, |_, _| 0.75));
        for (i, v) in s.data().iter().enumerate() {
            if i == 2 * 4 + 2 {
                assert!((v.re - 12.0).abs() < 1e-12 && v.im.abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12, "bin {i} = {v}");
            }
        }
    }

    #[test]
    fn checkerboard_lands_on_corner_bin() {
        let s = fft2_shifted(&map(4, 4, |y, x| if (y + x) % 2 == 0 { 1.0 } else { -1.0 }));
        assert!((s.data()[0].norm() - 16.0).abs() < 1e-12);
        let rest: f64 = s.data()[1..].iter().map(|v| v.norm()).sum();
        assert!(rest < 1e-10);
    }

    #[test]
    fn dc_lives_at_floor_center_for_odd_sizes() {
        let x = map(5, 3, |y, x| (y * 3 + x) as f32);
        let s = fft2_shifted(&x);
        let sum: f64 = x.data().iter().map(|&v| f64::from(v)).sum();
        let dc = s.data()[2 * 3 + 1];
        assert!((dc.re - sum).abs() < 1e-9 && dc.im.abs() < 1e-9);
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let dims = Dims::new(1, 1, 4, 6);
        let mut data = vec![Complex64::default(); 24];
        data[2 * 6 + 3] = Complex64::new(24.0 * -1.5, 0.0);
        let x = ifft2_shifted(&SpectrumMap::from_shifted(dims, data).unwrap()).unwrap();
        assert!(x.data().iter().all(|&v| (v + 1.5).abs() < 1e-6));
    }

    #[test]
    fn asymmetric_spectrum_is_rejected() {
        let dims = Dims::new(1, 1, 4, 4);
        let mut data = vec![Complex64::default(); 16];
        // A single off-center bin with no conjugate partner.
        data[2 * 4 + 3] = Complex64::new(16.0, 0.0);
        let err = ifft2_shifted(&SpectrumMap::from_shifted(dims, data).unwrap()).unwrap_err();
        assert!(matches!(err, Error::ImaginaryResidue { .. }));
    }
}
