//! Procedural test scenes: band-correlated Gaussian fields plus geometric
//! shapes, degraded with the sensor MTF to produce PAN/MS pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filtering::{convolve, interpolate_upscale, mtf_kernels, Kernel};
use crate::raster::{validate_pair, PanMsPair, Raster, SensorSpec, ShiftMap, DEFAULT_DYNAMIC_RANGE};
use crate::resampling::{decimate, wald_downgrade};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    /// MS side length; the PAN side is `ms_size * ratio`.
    pub ms_size: usize,
    pub bands: usize,
    pub ratio: usize,
    pub seed: u64,
}

impl SceneConfig {
    pub fn new(ms_size: usize, bands: usize, ratio: usize, seed: u64) -> Self {
        Self {
            ms_size,
            bands,
            ratio,
            seed,
        }
    }

    pub fn pan_size(&self) -> usize {
        self.ms_size * self.ratio
    }
}

fn gaussian_plane(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Zero-mean unit-variance smooth field: coarse noise at several octaves,
/// interpolated to `size` and lightly blurred.
fn smooth_field(rng: &mut ChaCha8Rng, size: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; size * size];
    for (factor, weight) in [(32usize, 1.0), (8, 0.6), (2, 0.25)] {
        let factor = factor.min(size / 4).max(1);
        let n = size / factor;
        let coarse = Raster::new(n, n, 1, gaussian_plane(rng, n), DEFAULT_DYNAMIC_RANGE)?;
        let up = if factor > 1 {
            interpolate_upscale(&coarse, factor)?
        } else {
            coarse
        };
        acc.iter_mut().zip(up.data()).for_each(|(a, v)| *a += weight * v);
    }
    let blurred = convolve(
        &Raster::new(size, size, 1, acc, DEFAULT_DYNAMIC_RANGE)?,
        &[Kernel::gaussian(0.8, 5)?],
    )?;
    let mut v = blurred.into_data();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x = (*x - m) / sd);
    Ok(v)
}

enum Shape {
    Rect { r0: f64, c0: f64, h: f64, w: f64 },
    Disc { r: f64, c: f64, rad: f64 },
}

impl Shape {
    /// Row and column ranges covering the shape, clipped to `size`.
    fn bounds(&self, size: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (r0, r1, c0, c1) = match *self {
            Shape::Rect { r0, c0, h, w } => (r0, r0 + h, c0, c0 + w),
            Shape::Disc { r, c, rad } => (r - rad, r + rad, c - rad, c + rad),
        };
        let clip = |v: f64| (v.max(0.0).ceil() as usize).min(size);
        (clip(r0)..clip(r1 + 1.0), clip(c0)..clip(c1 + 1.0))
    }

    fn contains(&self, i: f64, j: f64) -> bool {
        match *self {
            Shape::Rect { r0, c0, h, w } => i >= r0 && i < r0 + h && j >= c0 && j < c0 + w,
            Shape::Disc { r, c, rad } => (i - r).powi(2) + (j - c).powi(2) <= rad * rad,
        }
    }
}

/// High-resolution `bands`-band scene at PAN resolution, values in `[1, 2047]`.
pub fn latent_scene(cfg: &SceneConfig) -> Result<Raster> {
    if cfg.ms_size < 8 || cfg.bands == 0 || cfg.ratio < 2 || !cfg.ratio.is_power_of_two() {
        return Err(Error::param(format!("unsupported scene configuration {cfg:?}")));
    }
    let size = cfg.pan_size();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let common = smooth_field(&mut rng, size)?;
    let sz = size as f64;
    let shapes: Vec<(Shape, Vec<f64>)> = (0..12 + size / 64)
        .map(|k| {
            let shape = if k % 2 == 0 {
                Shape::Rect {
                    r0: rng.random_range(0.0..sz),
                    c0: rng.random_range(0.0..sz),
                    h: rng.random_range(sz / 32.0..sz / 6.0),
                    w: rng.random_range(sz / 32.0..sz / 6.0),
                }
            } else {
                Shape::Disc {
                    r: rng.random_range(0.0..sz),
                    c: rng.random_range(0.0..sz),
                    rad: rng.random_range(sz / 64.0..sz / 10.0),
                }
            };
            let shared: f64 = rng.random_range(-250.0..250.0);
            let spectrum = (0..cfg.bands)
                .map(|_| shared * rng.random_range(0.6..1.4))
                .collect();
            (shape, spectrum)
        })
        .collect();

    let mut planes = Vec::with_capacity(cfg.bands);
    for b in 0..cfg.bands {
        let own = smooth_field(&mut rng, size)?;
        let base = rng.random_range(300.0..900.0);
        let amp = rng.random_range(80.0..160.0);
        let mix = rng.random_range(0.6..0.85);
        let texture = rng.random_range(8.0..20.0);
        let mut plane: Vec<f64> = common
            .iter()
            .zip(&own)
            .map(|(c, o)| base + amp * (mix * c + (1.0 - mix) * o) + texture * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for (shape, spectrum) in &shapes {
            let (rows, cols) = shape.bounds(size);
            for i in rows {
                for j in cols.clone() {
                    if shape.contains(i as f64, j as f64) {
                        plane[i * size + j] += spectrum[b];
                    }
                }
            }
        }
        plane.iter_mut().for_each(|v| *v = v.clamp(1.0, DEFAULT_DYNAMIC_RANGE));
        planes.push(plane);
    }
    Raster::from_bands(size, size, planes, DEFAULT_DYNAMIC_RANGE)
}

/// PAN synthesized as a non-uniform positive combination of the latent bands.
pub fn synthesize_pan(latent: &Raster, seed: u64) -> Result<Raster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A_5A5A);
    let w: Vec<f64> = (0..latent.bands()).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = w.iter().sum();
    let mut pan = vec![0.0; latent.plane_len()];
    for (band, wb) in latent.band_iter().zip(&w) {
        pan.iter_mut().zip(band).for_each(|(p, v)| *p += v * wb / total);
    }
    Raster::new(latent.rows(), latent.cols(), 1, pan, latent.dynamic_range())
}

/// Full-resolution pair: PAN from the latent scene, MS from its MTF-filtered
/// decimation at phase `(0, 0)`.
pub fn fr_pair(cfg: &SceneConfig) -> Result<PanMsPair> {
    let latent = latent_scene(cfg)?;
    let sensor = SensorSpec::with_default_gains("synthetic", cfg.ratio, cfg.bands)?;
    let pan = synthesize_pan(&latent, cfg.seed)?;
    let lp = convolve(&latent, &mtf_kernels(&sensor.ms_nyquist_gains, cfg.ratio)?)?;
    let ms = decimate(&lp, cfg.ratio, &ShiftMap::zeros(cfg.bands))?;
    validate_pair(pan, ms, sensor)
}

/// Reduced-resolution case built by Wald degradation of an FR pair whose MS
/// side is `ms_size * ratio`, so the reduced pair has MS side `ms_size`.
/// Returns the reduced pair and the ground truth on the reduced PAN grid.
pub fn rr_case(cfg: &SceneConfig, misalign: Option<(usize, usize)>) -> Result<(PanMsPair, Raster)> {
    let full = fr_pair(&SceneConfig {
        ms_size: cfg.ms_size * cfg.ratio,
        ..*cfg
    })?;
    wald_downgrade(&full, misalign)
}

/// `gt` plus white Gaussian noise of `level` times each band's standard deviation.
pub fn add_band_noise(gt: &Raster, level: f64, seed: u64) -> Result<Raster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(gt.data().len());
    for band in gt.band_iter() {
        let n = band.len() as f64;
        let m = band.iter().sum::<f64>() / n;
        let sd = (band.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        data.extend(
            band.iter()
                .map(|v| v + level * sd * rng.sample::<f64, _>(StandardNormal)),
        );
    }
    Raster::new(gt.rows(), gt.cols(), gt.bands(), data, gt.dynamic_range())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = latent_scene(&SceneConfig::new(16, 3, 4, 1)).unwrap();
        let b = latent_scene(&SceneConfig::new(16, 3, 4, 1)).unwrap();
        let c = latent_scene(&SceneConfig::new(16, 3, 4, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|v| (1.0..=2047.0).contains(v)));
    }

    #[test]
    fn bands_are_correlated_but_distinct() {
        let s = latent_scene(&SceneConfig::new(16, 4, 4, 3)).unwrap();
        let r = crate::alignment::global_corrcoef(s.band(0), s.band(1)).unwrap();
        assert!(r > 0.3 && r < 0.999, "{r}");
    }

    #[test]
    fn pair_geometry() {
        let p = fr_pair(&SceneConfig::new(16, 4, 4, 4)).unwrap();
        assert_eq!((p.pan().rows(), p.ms().rows(), p.ms().bands()), (64, 16, 4));
        let (rr, gt) = rr_case(&SceneConfig::new(16, 4, 4, 4), None).unwrap();
        assert_eq!((rr.pan().rows(), rr.ms().rows(), gt.rows()), (64, 16, 64));
    }

    #[test]
    fn noise_level_scales_error() {
        let gt = latent_scene(&SceneConfig::new(8, 2, 4, 5)).unwrap();
        let err = |l: f64| {
            let n = add_band_noise(&gt, l, 9).unwrap();
            n.data().iter().zip(gt.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        assert_eq!(err(0.0), 0.0);
        assert!(err(0.2) > err(0.05));
    }
}
