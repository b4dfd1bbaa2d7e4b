//! Fréchet distance between Gaussian-fitted embeddings, paired KL divergence of
//! class posteriors, and spectral band energies.
//!
//! Embeddings and posteriors come from files produced by an external extractor;
//! this module only does the math.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::refine::in_central_region;
use crate::tensor::{fft2_shifted, FeatureMap};

/// Tolerance for symmetry and negative eigenvalues, scaled by matrix magnitude.
const PSD_TOL: f64 = 1e-8;

/// `n` embeddings of dimension `d`, one row per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: DMatrix<f64>,
}

impl EmbeddingSet {
    pub fn new(n: usize, d: usize, data: &[f64]) -> Result<Self> {
        if n < 2 || d == 0 {
            return Err(Error::InvalidParam(format!(
                "embedding set needs n >= 2 and d >= 1, got n={n} d={d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n}x{d} embeddings",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("embeddings must be finite".into()));
        }
        Ok(Self {
            vectors: DMatrix::from_row_slice(n, d, data),
        })
    }

    /// Reads a `(1, 1, n, d)` feature map.
    pub fn from_feature_map(x: &FeatureMap) -> Result<Self> {
        let dims = x.dims();
        if dims.batch != 1 || dims.channels != 1 {
            return Err(Error::ShapeMismatch(format!(
                "embedding file must have dims (1, 1, n, d), got {dims}"
            )));
        }
        let data: Vec<f64> = x.data().iter().map(|&v| f64::from(v)).collect();
        Self::new(dims.height, dims.width, &data)
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn d(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }
}

/// Mean and covariance of an embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 || sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "mean of length {d} with {}x{} covariance",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("gaussian stats must be finite".into()));
        }
        let scale = sigma.amax().max(1.0);
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > PSD_TOL * scale {
            return Err(Error::InvalidParam(format!(
                "covariance not symmetric (max |S - Sᵀ| = {asym:e})"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Column mean and unbiased (n − 1) covariance, symmetrized.
pub fn gaussian_stats(set: &EmbeddingSet) -> GaussianStats {
    let e = &set.vectors;
    let n = e.nrows() as f64;
    let mu: DVector<f64> = e.row_mean().transpose();
    let mut centered = e.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    let sigma = (&cov + cov.transpose()) * 0.5;
    GaussianStats { mu, sigma }
}

fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

fn check_eigenvalues(values: &DVector<f64>, what: &str) -> Result<()> {
    let scale = values.amax().max(1.0);
    if let Some(v) = values.iter().find(|&&v| v < -PSD_TOL * scale) {
        return Err(Error::Numerical(format!(
            "{what} has eigenvalue {v:e}; not positive semidefinite"
        )));
    }
    Ok(())
}

/// Square roots of eigenvalues, with those indistinguishable from zero at
/// working precision (below `16·d·ε·max|λ|`) set to exactly zero. Without the
/// cutoff, round-off in a singular covariance turns into `√ε`-sized error.
fn eigen_roots(values: &DVector<f64>) -> DVector<f64> {
    let cutoff = 16.0 * values.len() as f64 * f64::EPSILON * values.amax();
    values.map(|v| if v <= cutoff { 0.0 } else { v.sqrt() })
}

/// Principal square root of a symmetric PSD matrix, eigenvalues clamped at 0.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(m);
    check_eigenvalues(&eig.eigenvalues, "covariance")?;
    let roots = eigen_roots(&eig.eigenvalues);
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `Tr((Σa Σb)^{1/2})` via the eigenvalues of `√Σa · Σb · √Σa`.
pub fn trace_sqrt_product(sigma_a: &DMatrix<f64>, sigma_b: &DMatrix<f64>) -> Result<f64> {
    if sigma_a.shape() != sigma_b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?} covariances",
            sigma_a.shape(),
            sigma_b.shape()
        )));
    }
    let root_a = psd_sqrt(sigma_a)?;
    let inner = &root_a * sigma_b * &root_a;
    let eig = sym_eigen(&inner);
    check_eigenvalues(&eig.eigenvalues, "sqrt(Σa)·Σb·sqrt(Σa)")?;
    Ok(eigen_roots(&eig.eigenvalues).sum())
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})`, never negative.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "stats of dimension {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.mu
        .iter()
        .chain(a.sigma.iter())
        .chain(b.mu.iter())
        .chain(b.sigma.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidParam("gaussian stats must be finite".into()));
    }
    let mean_term = (&a.mu - &b.mu).norm_squared();
    let trace_term =
        a.sigma.trace() + b.sigma.trace() - 2.0 * trace_sqrt_product(&a.sigma, &b.sigma)?;
    let fd = mean_term + trace_term;
    let tol = PSD_TOL * (1.0 + a.sigma.trace().abs() + b.sigma.trace().abs());
    if fd < -tol {
        return Err(Error::Numerical(format!(
            "Fréchet distance came out at {fd:e}"
        )));
    }
    Ok(fd.max(0.0))
}

/// Reference and generated class posteriors for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPair {
    p_ref: Vec<f64>,
    p_gen: Vec<f64>,
}

/// Largest deviation of a posterior's sum from 1 that is silently renormalized.
pub const NORMALIZATION_TOL: f64 = 1e-6;

fn normalized(p: Vec<f64>, tol: f64, which: &str) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::InvalidParam(format!("{which} posterior is empty")));
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidParam(format!(
            "{which} posterior has entry {v}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidParam(format!(
            "{which} posterior sums to {sum}, not 1"
        )));
    }
    Ok(p.into_iter().map(|v| v / sum).collect())
}

impl PosteriorPair {
    pub fn new(p_ref: Vec<f64>, p_gen: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(p_ref, p_gen, NORMALIZATION_TOL)
    }

    fn with_tolerance(p_ref: Vec<f64>, p_gen: Vec<f64>, tol: f64) -> Result<Self> {
        if p_ref.len() != p_gen.len() {
            return Err(Error::ShapeMismatch(format!(
                "posteriors over {} vs {} classes",
                p_ref.len(),
                p_gen.len()
            )));
        }
        Ok(Self {
            p_ref: normalized(p_ref, tol, "reference")?,
            p_gen: normalized(p_gen, tol, "generated")?,
        })
    }

    pub fn p_ref(&self) -> &[f64] {
        &self.p_ref
    }

    pub fn p_gen(&self) -> &[f64] {
        &self.p_gen
    }

    /// `KL(ref ‖ gen)` with additive smoothing `eps` inside the logs.
    pub fn kl(&self, eps: f64) -> f64 {
        self.p_ref
            .iter()
            .zip(&self.p_gen)
            .map(|(&p, &q)| {
                if p == 0.0 {
                    0.0
                } else {
                    p * ((p + eps).ln() - (q + eps).ln())
                }
            })
            .sum()
    }
}

/// Reads a `(1, 2, n, k)` posterior file: channel 0 reference, channel 1 generated.
///
/// Stored values are f32, so the renormalization tolerance widens to
/// `k · f32::EPSILON` when that exceeds [`NORMALIZATION_TOL`].
pub fn pairs_from_feature_map(x: &FeatureMap) -> Result<Vec<PosteriorPair>> {
    let dims = x.dims();
    if dims.batch != 1 || dims.channels != 2 {
        return Err(Error::ShapeMismatch(format!(
            "posterior file must have dims (1, 2, n, k), got {dims}"
        )));
    }
    let k = dims.width;
    let tol = NORMALIZATION_TOL.max(k as f64 * f64::from(f32::EPSILON));
    let (refs, gens) = (x.plane(0, 0), x.plane(0, 1));
    refs.chunks_exact(k)
        .zip(gens.chunks_exact(k))
        .map(|(r, g)| {
            PosteriorPair::with_tolerance(
                r.iter().map(|&v| f64::from(v)).collect(),
                g.iter().map(|&v| f64::from(v)).collect(),
                tol,
            )
        })
        .collect()
}

pub const DEFAULT_KL_EPS: f64 = 1e-10;

/// Mean `KL(ref ‖ gen)` over paired clips.
pub fn mean_paired_kl(pairs: &[PosteriorPair], eps: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidParam("no posterior pairs".into()));
    }
    let k = pairs[0].p_ref.len();
    if let Some(p) = pairs.iter().find(|p| p.p_ref.len() != k) {
        return Err(Error::ShapeMismatch(format!(
            "pairs over {k} and {} classes",
            p.p_ref.len()
        )));
    }
    let total: f64 = pairs.iter().map(|p| p.kl(eps)).sum();
    Ok((total / pairs.len() as f64).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSplit {
    pub lf: f64,
    pub hf: f64,
}

/// Spectral power inside and outside the central low-frequency rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergy {
    /// One split per `(b, c)` plane in storage order.
    pub slices: Vec<BandSplit>,
    pub lf: f64,
    pub hf: f64,
}

impl BandEnergy {
    pub fn total(&self) -> f64 {
        self.lf + self.hf
    }
}

/// Splits `Σ|FFT(x)|²` of each plane by the central-region rectangle.
pub fn band_energy(x: &FeatureMap) -> Result<BandEnergy> {
    let dims = x.dims();
    if dims.height < 2 || dims.width < 2 {
        return Err(Error::InvalidParam(format!(
            "band energy needs H, W >= 2, got {}x{}",
            dims.height, dims.width
        )));
    }
    let low: Vec<bool> = (0..dims.plane_len())
        .map(|i| in_central_region(i / dims.width, i % dims.width, dims.height, dims.width))
        .collect();
    let spectrum = fft2_shifted(x);
    let slices: Vec<BandSplit> = spectrum
        .planes()
        .map(|plane| {
            let mut split = BandSplit { lf: 0.0, hf: 0.0 };
            for (v, &is_low) in plane.iter().zip(&low) {
                if is_low {
                    split.lf += v.norm_sqr();
                } else {
                    split.hf += v.norm_sqr();
                }
            }
            split
        })
        .collect();
    let lf = slices.iter().map(|s| s.lf).sum();
    let hf = slices.iter().map(|s| s.hf).sum();
    Ok(BandEnergy { slices, lf, hf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    fn stats(mu: &[f64], sigma: &[f64]) -> GaussianStats {
        let d = mu.len();
        GaussianStats::new(
            DVector::from_column_slice(mu),
            DMatrix::from_row_slice(d, d, sigma),
        )
        .unwrap()
    }

    #[test]
    fn two_point_stats() {
        let set = EmbeddingSet::new(2, 2, &[0.0, 0.0, 2.0, 2.0]).unwrap();
        let g = gaussian_stats(&set);
        assert_eq!(g.mu.as_slice(), &[1.0, 1.0]);
        assert_eq!(g.sigma.as_slice(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn repeated_vector_has_zero_covariance() {
        let data: Vec<f64> = std::iter::repeat_n([0.3, -1.0, 4.0], 5).flatten().collect();
        let g = gaussian_stats(&EmbeddingSet::new(5, 3, &data).unwrap());
        assert!(g.sigma.amax() < 1e-15);
    }

    #[test]
    fn embedding_set_needs_two_rows() {
        assert!(EmbeddingSet::new(1, 3, &[1.0, 2.0, 3.0]).is_err());
        assert!(EmbeddingSet::new(2, 2, &[1.0; 3]).is_err());
    }

    #[test]
    fn closed_form_distances() {
        let one_d = frechet_distance(&stats(&[0.0], &[1.0]), &stats(&[1.0], &[1.0])).unwrap();
        assert!((one_d - 1.0).abs() < 1e-12);
        let diag = frechet_distance(
            &stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]),
            &stats(&[0.0, 0.0], &[4.0, 0.0, 0.0, 4.0]),
        )
        .unwrap();
        assert!((diag - 2.0).abs() < 1e-12);
        // Different variances in 1-D: (σa − σb)².
        let var = frechet_distance(&stats(&[0.0], &[1.0]), &stats(&[0.0], &[9.0])).unwrap();
        assert!((var - 4.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_and_bad_stats() {
        let a = stats(&[0.0], &[1.0]);
        let b = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            frechet_distance(&a, &b),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(GaussianStats::new(
            DVector::from_column_slice(&[0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])
        )
        .is_err());
        let neg = stats(&[0.0], &[-1.0]);
        assert!(matches!(
            frechet_distance(&neg, &a),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn kl_simple_pair() {
        let pair = PosteriorPair::new(vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
        let kl = mean_paired_kl(std::slice::from_ref(&pair), DEFAULT_KL_EPS).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-4);
        let rev = PosteriorPair::new(vec![0.5, 0.5], vec![1.0, 0.0]).unwrap();
        let kl_rev = mean_paired_kl(&[rev], DEFAULT_KL_EPS).unwrap();
        assert!((kl - kl_rev).abs() > 1e-3);
    }

    #[test]
    fn kl_input_validation() {
        assert!(mean_paired_kl(&[], DEFAULT_KL_EPS).is_err());
        assert!(PosteriorPair::new(vec![0.5, 0.5], vec![1.0]).is_err());
        assert!(PosteriorPair::new(vec![0.5, 0.6], vec![0.5, 0.5]).is_err());
        assert!(PosteriorPair::new(vec![1.5, -0.5], vec![0.5, 0.5]).is_err());
        let near = PosteriorPair::new(vec![0.5, 0.5 + 5e-7], vec![0.5, 0.5]).unwrap();
        assert!((near.p_ref().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let a = PosteriorPair::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let b = PosteriorPair::new(vec![0.2, 0.3, 0.5], vec![0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(
            mean_paired_kl(&[a, b], DEFAULT_KL_EPS),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn posterior_file_layout() {
        let x = FeatureMap::new(
            Dims::new(1, 2, 2, 2),
            vec![1.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        )
        .unwrap();
        let pairs = pairs_from_feature_map(&x).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].p_ref(), &[1.0, 0.0]);
        assert_eq!(pairs[0].p_gen(), &[0.5, 0.5]);
        let wrong = FeatureMap::zeros(Dims::new(1, 1, 2, 2)).unwrap();
        assert!(pairs_from_feature_map(&wrong).is_err());
    }

    #[test]
    fn band_energy_extremes() {
        let c = FeatureMap::new(Dims::new(1, 1, 4, 4), vec![2.0; 16]).unwrap();
        let e = band_energy(&c).unwrap();
        assert_eq!(e.hf, 0.0);
        assert!((e.lf - 32.0f64.powi(2)).abs() < 1e-9);
        let cb = FeatureMap::from_fn(Dims::new(1, 1, 6, 6), |_, _, y, x| {
            if (y + x) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .unwrap();
        assert!(band_energy(&cb).unwrap().lf < 1e-20);
    }
}
