//! Brute-force reference implementations shared by the integration tests.
//! None of these call into the transform or eigen code they are used to check.

#![allow(dead_code, clippy::needless_range_loop)]

use std::f64::consts::PI;

use melrefine::unet::GaussianStream;
use melrefine::{Dims, FeatureMap};

pub fn random_map(dims: Dims, seed: u64) -> FeatureMap {
    let mut g = GaussianStream::new(seed);
    FeatureMap::new(dims, g.fill(dims.len(), 1.0)).unwrap()
}

/// O(N²) DFT of one plane, center-shifted: entry `(sy, sx)` holds frequency
/// `((sy - h/2) mod h, (sx - w/2) mod w)`. Returns `(re, im)` pairs.
pub fn naive_dft_shifted(plane: &[f32], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); h * w];
    for sy in 0..h {
        let u = (sy + h - h / 2) % h;
        for sx in 0..w {
            let v = (sx + w - w / 2) % w;
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    let val = f64::from(plane[y * w + x]);
                    re += val * phase.cos();
                    im += val * phase.sin();
                }
            }
            out[sy * w + sx] = (re, im);
        }
    }
    out
}

/// O(N²) inverse of [`naive_dft_shifted`], normalized by `1/(h·w)`.
pub fn naive_idft_shifted(spec: &[(f64, f64)], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for sy in 0..h {
                let u = (sy + h - h / 2) % h;
                for sx in 0..w {
                    let v = (sx + w - w / 2) % w;
                    let phase = 2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    let (a, b) = spec[sy * w + sx];
                    re += a * phase.cos() - b * phase.sin();
                    im += a * phase.sin() + b * phase.cos();
                }
            }
            let n = (h * w) as f64;
            out[y * w + x] = (re / n, im / n);
        }
    }
    out
}

/// Low band membership re-derived from the signed frequency: `|k| < N/4`.
pub fn oracle_is_low(index: usize, len: usize) -> bool {
    let k = index as f64 - (len / 2) as f64;
    k.abs() < len as f64 / 4.0
}

/// `(lf, hf)` spectral power of every plane, via the naive DFT.
pub fn naive_band_energy(x: &FeatureMap) -> (f64, f64) {
    let d = x.dims();
    let (mut lf, mut hf) = (0.0, 0.0);
    for plane in x.planes() {
        let spec = naive_dft_shifted(plane, d.height, d.width);
        for (i, (re, im)) in spec.iter().enumerate() {
            let p = re * re + im * im;
            if oracle_is_low(i / d.width, d.height) && oracle_is_low(i % d.width, d.width) {
                lf += p;
            } else {
                hf += p;
            }
        }
    }
    (lf, hf)
}

/// Scalar-loop structure scaling: channel mean, per-batch min-max, gain in [1, m].
pub fn naive_structure_scale(x: &FeatureMap, m: f64, eps: f64) -> Vec<f64> {
    let d = x.dims();
    let mut out = vec![0.0; d.len()];
    for b in 0..d.batch {
        let mut mean = vec![vec![0.0; d.width]; d.height];
        for y in 0..d.height {
            for xx in 0..d.width {
                let mut s = 0.0;
                for c in 0..d.channels {
                    s += f64::from(x.get(b, c, y, xx));
                }
                mean[y][xx] = s / d.channels as f64;
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &mean {
            for &v in row {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        for c in 0..d.channels {
            for y in 0..d.height {
                for xx in 0..d.width {
                    let alpha = if hi - lo < eps {
                        1.0
                    } else {
                        (m - 1.0) * (mean[y][xx] - lo) / (hi - lo) + 1.0
                    };
                    let idx = ((b * d.channels + c) * d.height + y) * d.width + xx;
                    out[idx] = f64::from(x.get(b, c, y, xx)) * alpha;
                }
            }
        }
    }
    out
}

pub type Mat = Vec<Vec<f64>>;

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let p = b[0].len();
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..b.len() {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len())
        .map(|j| a.iter().map(|r| r[j]).collect())
        .collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: `(values, vectors)`,
/// eigenvectors in columns.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Mat = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// `Tr((A B)^{1/2})` through two Jacobi decompositions.
pub fn jacobi_trace_sqrt_product(a: &Mat, b: &Mat) -> f64 {
    let (vals, vecs) = jacobi_eigen(a);
    let n = a.len();
    let mut d: Mat = vec![vec![0.0; n]; n];
    for i in 0..n {
        d[i][i] = vals[i].max(0.0).sqrt();
    }
    let root = matmul(&matmul(&vecs, &d), &transpose(&vecs));
    let inner = matmul(&matmul(&root, b), &root);
    let sym: Mat = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (inner[i][j] + inner[j][i])).collect())
        .collect();
    jacobi_eigen(&sym)
        .0
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum()
}

/// Random symmetric positive definite `d × d` matrix `G Gᵀ / d + δ I`.
pub fn random_spd(d: usize, seed: u64, delta: f64) -> Mat {
    let mut g = GaussianStream::new(seed);
    let m: Mat = (0..d)
        .map(|_| (0..d).map(|_| g.next_normal()).collect())
        .collect();
    let mut s = matmul(&m, &transpose(&m));
    for (i, row) in s.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= d as f64;
        }
        row[i] += delta;
    }
    s
}
