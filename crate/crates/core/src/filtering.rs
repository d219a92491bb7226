//! MTF-matched low-pass kernels, mirror-padded convolution and dyadic
//! polynomial upscaling.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::config;
use crate::error::{Error, Result};
use crate::lanes;
use crate::raster::Raster;

/// Maps any integer index onto `0..n` by half-sample symmetric reflection
/// (`d c b a | a b c d | d c b a`), repeating as often as needed.
#[inline]
pub(crate) fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// A 2-D odd-sized low-pass kernel with unit DC gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    taps: Vec<f64>,
    /// 1-D factor when the kernel is an outer product of a symmetric vector with itself.
    separable: Option<Vec<f64>>,
    nyquist_gain_target: f64,
    ratio: usize,
}

impl Kernel {
    /// General kernel from `size * size` row-major taps.
    pub fn from_taps(size: usize, taps: Vec<f64>) -> Result<Kernel> {
        if size % 2 == 0 {
            return Err(Error::param(format!("kernel size must be odd, got {size}")));
        }
        if taps.len() != size * size {
            return Err(Error::param(format!(
                "{} taps for a {size}x{size} kernel",
                taps.len()
            )));
        }
        let n = taps.len();
        if (0..n).any(|i| (taps[i] - taps[n - 1 - i]).abs() > 1e-15) {
            return Err(Error::param("kernel is not symmetric under 180 degree rotation"));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("kernel taps sum to {sum}, expected 1")));
        }
        Ok(Kernel {
            size,
            taps,
            separable: None,
            nyquist_gain_target: f64::NAN,
            ratio: 1,
        })
    }

    /// Outer product of a normalised symmetric 1-D vector with itself.
    fn separable(profile: Vec<f64>, nyquist_gain_target: f64, ratio: usize) -> Kernel {
        let size = profile.len();
        let mut taps = Vec::with_capacity(size * size);
        for &a in &profile {
            taps.extend(profile.iter().map(|&b| a * b));
        }
        Kernel {
            size,
            taps,
            separable: Some(profile),
            nyquist_gain_target,
            ratio,
        }
    }

    /// The single-tap identity kernel.
    pub fn identity() -> Kernel {
        Kernel::separable(vec![1.0], 1.0, 1)
    }

    /// Truncated sampled Gaussian with spatial standard deviation `sigma`.
    pub fn gaussian(sigma: f64, size: usize) -> Result<Kernel> {
        if size % 2 == 0 {
            return Err(Error::param(format!("kernel size must be odd, got {size}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param(format!("gaussian sigma must be positive, got {sigma}")));
        }
        let half = (size / 2) as isize;
        let mut g: Vec<f64> = (-half..=half)
            .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        normalize(&mut g);
        Ok(Kernel::separable(g, f64::NAN, 1))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major `size * size` taps.
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, row: usize, col: usize) -> f64 {
        self.taps[row * self.size + col]
    }

    pub fn profile(&self) -> Option<&[f64]> {
        self.separable.as_deref()
    }

    pub fn nyquist_gain_target(&self) -> f64 {
        self.nyquist_gain_target
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    /// Magnitude of the kernel's frequency response at `(fy, fx)` cycles/sample.
    pub fn frequency_response(&self, fy: f64, fx: f64) -> f64 {
        let h = (self.size / 2) as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for r in 0..self.size {
            for c in 0..self.size {
                let phase = -2.0 * PI * (fy * (r as f64 - h) + fx * (c as f64 - h));
                re += self.tap(r, c) * phase.cos();
                im += self.tap(r, c) * phase.sin();
            }
        }
        re.hypot(im)
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// Spatial standard deviation of the Gaussian whose response at the
/// decimated Nyquist frequency `1 / (2 ratio)` equals `gain`.
pub fn mtf_sigma(gain: f64, ratio: usize) -> f64 {
    let f_nyq = 1.0 / (2.0 * ratio as f64);
    (-gain.ln() / (2.0 * PI * PI * f_nyq * f_nyq)).sqrt()
}

/// Gaussian low-pass kernel matching a sensor MTF with Nyquist gain `gain`
/// for resolution ratio `ratio`.
pub fn mtf_kernel(gain: f64, ratio: usize, size: usize) -> Result<Kernel> {
    if !(gain > 0.0 && gain < 1.0) {
        return Err(Error::param(format!("Nyquist gain must lie in (0,1), got {gain}")));
    }
    if ratio < 2 {
        return Err(Error::param(format!("ratio must be >= 2, got {ratio}")));
    }
    if size % 2 == 0 {
        return Err(Error::param(format!("kernel size must be odd, got {size}")));
    }
    let mut k = Kernel::gaussian(mtf_sigma(gain, ratio), size)?;
    k.nyquist_gain_target = gain;
    k.ratio = ratio;
    Ok(k)
}

/// MTF kernel with the configured default size for `ratio`.
pub fn default_mtf_kernel(gain: f64, ratio: usize) -> Result<Kernel> {
    mtf_kernel(gain, ratio, config::filters().mtf_defaults.kernel_size(ratio))
}

/// Hamming-windowed sinc with cut-off at the decimated Nyquist frequency,
/// used as an approximately ideal anti-aliasing filter.
pub fn windowed_sinc_kernel(ratio: usize, size: usize) -> Result<Kernel> {
    if ratio < 2 || size % 2 == 0 {
        return Err(Error::param(format!(
            "windowed sinc needs ratio >= 2 and odd size, got ratio {ratio} size {size}"
        )));
    }
    let half = (size / 2) as isize;
    let fc = 1.0 / (2.0 * ratio as f64);
    let mut g: Vec<f64> = (-half..=half)
        .map(|k| {
            let x = k as f64;
            let sinc = if k == 0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let w = 0.54 + 0.46 * (PI * x / (half as f64 + 1.0)).cos();
            sinc * w
        })
        .collect();
    normalize(&mut g);
    Ok(Kernel::separable(g, 0.5, ratio))
}

/// Convolves one `rows x cols` plane with mirror padding.
pub(crate) fn convolve_plane(plane: &[f64], rows: usize, cols: usize, kernel: &Kernel) -> Vec<f64> {
    match kernel.profile() {
        Some(p) => convolve_separable(plane, rows, cols, p),
        None => convolve_direct(plane, rows, cols, kernel),
    }
}

fn convolve_separable(plane: &[f64], rows: usize, cols: usize, profile: &[f64]) -> Vec<f64> {
    let n = profile.len();
    let half = n / 2;
    // horizontally filtered rows live in a ring of `n` slots; the rows one
    // output row needs are always distinct modulo `n`
    let mut ring = vec![0.0; n * cols];
    let mut held = vec![usize::MAX; n];
    let mut padded = vec![0.0; cols + 2 * half];
    let mut filter_row = |src_r: usize, dst: &mut [f64]| {
        let row = &plane[src_r * cols..(src_r + 1) * cols];
        for (j, p) in padded.iter_mut().enumerate() {
            *p = row[mirror(j as isize - half as isize, cols)];
        }
        for (o, x) in dst.iter_mut().zip(&padded[half..half + cols]) {
            *o = profile[half] * x;
        }
        // symmetric profile: pair tap k with tap n - 1 - k
        for k in 0..half {
            let m = n - 1 - k;
            lanes::axpy2(dst, profile[k], &padded[k..k + cols], &padded[m..m + cols]);
        }
    };
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for k in 0..n {
            let src = mirror(r as isize + k as isize - half as isize, rows);
            let slot = src % n;
            if held[slot] != src {
                filter_row(src, &mut ring[slot * cols..(slot + 1) * cols]);
                held[slot] = src;
            }
        }
        let row_of = |src: usize| &ring[(src % n) * cols..(src % n + 1) * cols];
        let dst = &mut out[r * cols..(r + 1) * cols];
        for (d, x) in dst.iter_mut().zip(row_of(r)) {
            *d = profile[half] * x;
        }
        for k in 0..half {
            let a = mirror(r as isize + k as isize - half as isize, rows);
            let b = mirror(r as isize + half as isize - k as isize, rows);
            lanes::axpy2(dst, profile[k], row_of(a), row_of(b));
        }
    }
    out
}

fn convolve_direct(plane: &[f64], rows: usize, cols: usize, kernel: &Kernel) -> Vec<f64> {
    let n = kernel.size();
    let half = (n / 2) as isize;
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for kr in 0..n {
                let sr = mirror(r as isize + kr as isize - half, rows);
                for kc in 0..n {
                    let sc = mirror(c as isize + kc as isize - half, cols);
                    acc += kernel.tap(kr, kc) * plane[sr * cols + sc];
                }
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

/// Filters every band with its own kernel, mirror padding at the borders.
pub fn convolve(r: &Raster, kernels: &[Kernel]) -> Result<Raster> {
    if kernels.len() != r.bands() {
        return Err(Error::param(format!(
            "{} kernels for {} bands",
            kernels.len(),
            r.bands()
        )));
    }
    if let Some(k) = kernels.iter().find(|k| k.size() > r.rows().min(r.cols())) {
        return Err(Error::geometry(format!(
            "{}x{} kernel larger than {}x{} image",
            k.size(),
            k.size(),
            r.rows(),
            r.cols()
        )));
    }
    let planes: Vec<Vec<f64>> = (0..r.bands())
        .into_par_iter()
        .map(|b| convolve_plane(r.band(b), r.rows(), r.cols(), &kernels[b]))
        .collect();
    Ok(Raster::from_planes(r.rows(), r.cols(), planes, r.dynamic_range()))
}

/// Convenience: per-band MTF kernels for a list of Nyquist gains.
pub fn mtf_kernels(gains: &[f64], ratio: usize) -> Result<Vec<Kernel>> {
    gains.iter().map(|&g| default_mtf_kernel(g, ratio)).collect()
}

/// Upscaling interpolator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolator {
    /// Dyadic stages of the 23-tap half-band polynomial filter (power-of-two ratios only).
    #[default]
    HalfBand23,
    /// Keys cubic convolution (a = -0.5), any integer ratio.
    Bicubic,
}

/// Upscales by `ratio` with the default half-band interpolator; `ratio` must
/// be a power of two.
pub fn interpolate_upscale(r: &Raster, ratio: usize) -> Result<Raster> {
    interpolate_upscale_with(r, ratio, Interpolator::HalfBand23)
}

pub fn interpolate_upscale_with(r: &Raster, ratio: usize, interp: Interpolator) -> Result<Raster> {
    if ratio == 0 {
        return Err(Error::param("upscaling ratio must be positive"));
    }
    let planes: Vec<Vec<f64>> = match interp {
        Interpolator::HalfBand23 => {
            if !ratio.is_power_of_two() {
                return Err(Error::param(format!(
                    "half-band interpolation needs a power-of-two ratio, got {ratio} (request bicubic explicitly)"
                )));
            }
            let weights = halfband_weights();
            (0..r.bands())
                .into_par_iter()
                .map(|b| {
                    let (mut plane, mut rows, mut cols) = (r.band(b).to_vec(), r.rows(), r.cols());
                    let mut f = ratio;
                    while f > 1 {
                        plane = upsample2(&plane, rows, cols, &weights);
                        rows *= 2;
                        cols *= 2;
                        f /= 2;
                    }
                    plane
                })
                .collect()
        }
        Interpolator::Bicubic => (0..r.bands())
            .into_par_iter()
            .map(|b| bicubic_plane(r.band(b), r.rows(), r.cols(), ratio))
            .collect(),
    };
    Ok(Raster::from_planes(
        r.rows() * ratio,
        r.cols() * ratio,
        planes,
        r.dynamic_range(),
    ))
}

/// Odd-phase weights `w[m]` applied to `x[k-m] + x[k+1+m]`, rescaled so the
/// odd phase has exactly unit DC gain (the shipped table is rounded).
fn halfband_weights() -> Vec<f64> {
    let table = &config::filters().interpolator;
    let s: f64 = table.odd_taps.iter().sum();
    table.odd_taps.iter().map(|h| h / (2.0 * s)).collect()
}

fn upsample_line(src: &[f64], dst: &mut [f64], weights: &[f64], padded: &mut Vec<f64>, odd: &mut Vec<f64>) {
    let n = src.len();
    let pad = weights.len();
    padded.clear();
    padded.extend((0..n + 2 * pad).map(|i| src[mirror(i as isize - pad as isize, n)]));
    odd.clear();
    odd.resize(n, 0.0);
    for (m, &w) in weights.iter().enumerate() {
        let lo = pad - m;
        let hi = pad + 1 + m;
        lanes::axpy2(odd, w, &padded[lo..lo + n], &padded[hi..hi + n]);
    }
    for (k, pair) in dst.chunks_exact_mut(2).enumerate() {
        pair[0] = src[k];
        pair[1] = odd[k];
    }
}

/// One dyadic stage: even output samples copy the input, odd samples are
/// interpolated, first along rows then along columns.
fn upsample2(plane: &[f64], rows: usize, cols: usize, weights: &[f64]) -> Vec<f64> {
    let wide = 2 * cols;
    let mut horiz = vec![0.0; rows * wide];
    let (mut padded, mut odd) = (Vec::new(), Vec::new());
    for r in 0..rows {
        upsample_line(
            &plane[r * cols..(r + 1) * cols],
            &mut horiz[r * wide..(r + 1) * wide],
            weights,
            &mut padded,
            &mut odd,
        );
    }
    let mut out = vec![0.0; 2 * rows * wide];
    for k in 0..rows {
        out[2 * k * wide..(2 * k + 1) * wide].copy_from_slice(&horiz[k * wide..(k + 1) * wide]);
        let dst = &mut out[(2 * k + 1) * wide..(2 * k + 2) * wide];
        for (m, &w) in weights.iter().enumerate() {
            let lo = mirror(k as isize - m as isize, rows);
            let hi = mirror((k + 1 + m) as isize, rows);
            lanes::axpy2(dst, w, &horiz[lo * wide..(lo + 1) * wide], &horiz[hi * wide..(hi + 1) * wide]);
        }
    }
    out
}

fn keys_cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per output index: four source indices and weights, sample-preserving phase.
fn cubic_taps(n: usize, ratio: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..n * ratio)
        .map(|t| {
            let x = t as f64 / ratio as f64;
            let base = x.floor() as isize;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let s = base + k as isize - 1;
                idx[k] = mirror(s, n);
                w[k] = keys_cubic(x - s as f64);
            }
            (idx, w)
        })
        .collect()
}

fn bicubic_plane(plane: &[f64], rows: usize, cols: usize, ratio: usize) -> Vec<f64> {
    let ct = cubic_taps(cols, ratio);
    let rt = cubic_taps(rows, ratio);
    let wide = cols * ratio;
    let mut horiz = vec![0.0; rows * wide];
    for r in 0..rows {
        let src = &plane[r * cols..(r + 1) * cols];
        for (j, (idx, w)) in ct.iter().enumerate() {
            horiz[r * wide + j] = (0..4).map(|k| w[k] * src[idx[k]]).sum();
        }
    }
    let mut out = vec![0.0; rows * ratio * wide];
    for (i, (idx, w)) in rt.iter().enumerate() {
        let dst = &mut out[i * wide..(i + 1) * wide];
        for k in 0..4 {
            let src = &horiz[idx[k] * wide..(idx[k] + 1) * wide];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w[k] * s;
            }
        }
    }
    out
}
