//! Decimation, integer translation and Wald-protocol resolution downgrade.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filtering::{convolve, default_mtf_kernel, mirror, mtf_kernels};
use crate::raster::{validate_pair, PanMsPair, Raster, ShiftMap};

/// Keeps one sample in `ratio` along each axis; band `b` samples
/// `(i * ratio + dr_b, j * ratio + dc_b)`.
pub fn decimate(r: &Raster, ratio: usize, offsets: &ShiftMap) -> Result<Raster> {
    if ratio == 0 || r.rows() % ratio != 0 || r.cols() % ratio != 0 {
        return Err(Error::geometry(format!(
            "{}x{} raster not divisible by ratio {ratio}",
            r.rows(),
            r.cols()
        )));
    }
    if offsets.len() != r.bands() {
        return Err(Error::param(format!(
            "{} offsets for {} bands",
            offsets.len(),
            r.bands()
        )));
    }
    if let Some(o) = offsets
        .offsets()
        .iter()
        .find(|(dr, dc)| *dr >= ratio || *dc >= ratio)
    {
        return Err(Error::param(format!("offset {o:?} outside 0..{ratio}")));
    }
    let (rows, cols) = (r.rows() / ratio, r.cols() / ratio);
    let planes = offsets
        .offsets()
        .iter()
        .enumerate()
        .map(|(b, &(dr, dc))| {
            let src = r.band(b);
            let mut out = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                let row = (i * ratio + dr) * r.cols();
                out.extend((0..cols).map(|j| src[row + j * ratio + dc]));
            }
            out
        })
        .collect();
    Ok(Raster::from_planes(rows, cols, planes, r.dynamic_range()))
}

/// Integer translation per band: `out(i, j) = in(i - dr, j - dc)`, with
/// mirror fill for samples that enter from outside the frame.
pub fn shift_raster(r: &Raster, shifts: &[(isize, isize)]) -> Result<Raster> {
    if shifts.len() != r.bands() {
        return Err(Error::param(format!(
            "{} shifts for {} bands",
            shifts.len(),
            r.bands()
        )));
    }
    if let Some(s) = shifts
        .iter()
        .find(|(dr, dc)| dr.unsigned_abs() >= r.rows() || dc.unsigned_abs() >= r.cols())
    {
        return Err(Error::param(format!(
            "shift {s:?} too large for {}x{} raster",
            r.rows(),
            r.cols()
        )));
    }
    let planes = shifts
        .par_iter()
        .enumerate()
        .map(|(b, &(dr, dc))| shift_plane(r.band(b), r.rows(), r.cols(), dr, dc))
        .collect();
    Ok(Raster::from_planes(r.rows(), r.cols(), planes, r.dynamic_range()))
}

pub(crate) fn shift_plane(src: &[f64], rows: usize, cols: usize, dr: isize, dc: isize) -> Vec<f64> {
    let col_idx: Vec<usize> = (0..cols as isize).map(|j| mirror(j - dc, cols)).collect();
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows as isize {
        let row = &src[mirror(i - dr, rows) * cols..][..cols];
        out.extend(col_idx.iter().map(|&j| row[j]));
    }
    out
}

/// Wald-protocol downgrade of a full-resolution pair.
///
/// Each MS band is MTF-filtered with its own Nyquist gain and decimated by the
/// sensor ratio at offset `misalign` (default `(0, 0)`); the PAN is filtered
/// with the PAN gain and decimated at `(0, 0)`. Returns the reduced pair and
/// the original MS as ground truth.
pub fn wald_downgrade(
    pair: &PanMsPair,
    misalign: Option<(usize, usize)>,
) -> Result<(PanMsPair, Raster)> {
    let bands = pair.ms().bands();
    let offsets = ShiftMap::uniform(bands, misalign.unwrap_or((0, 0)), pair.ratio())?;
    wald_downgrade_per_band(pair, &offsets)
}

/// As [`wald_downgrade`] with an individual decimation offset per MS band.
pub fn wald_downgrade_per_band(pair: &PanMsPair, ms_offsets: &ShiftMap) -> Result<(PanMsPair, Raster)> {
    let r = pair.ratio();
    let sensor = pair.sensor();
    let ms_lp = convolve(pair.ms(), &mtf_kernels(&sensor.ms_nyquist_gains, r)?)?;
    let ms_red = decimate(&ms_lp, r, ms_offsets)?;
    let pan_lp = convolve(pair.pan(), &[default_mtf_kernel(sensor.pan_nyquist_gain, r)?])?;
    let pan_red = decimate(&pan_lp, r, &ShiftMap::zeros(1))?;
    let reduced = validate_pair(pan_red, ms_red, sensor.clone())?;
    Ok((reduced, pair.ms().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::interpolate_upscale;
    use crate::raster::SensorSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp(rows: usize, cols: usize) -> Raster {
        let data = (0..rows * cols).map(|i| i as f64).collect();
        Raster::new(rows, cols, 1, data, 1e4).unwrap()
    }

    fn random_raster(rows: usize, cols: usize, bands: usize, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols * bands).map(|_| rng.random::<f64>()).collect();
        Raster::new(rows, cols, bands, data, 1.0).unwrap()
    }

    #[test]
    fn decimate_ramp_phase_zero() {
        let r = ramp(8, 8);
        let d = decimate(&r, 4, &ShiftMap::zeros(1)).unwrap();
        assert_eq!(d.data(), &[0.0, 4.0, 32.0, 36.0]);
    }

    #[test]
    fn decimate_offset_moves_grid() {
        let data = (0..8 * 8).map(|i| (i / 8) as f64).collect();
        let rows_index = Raster::new(8, 8, 1, data, 10.0).unwrap();
        let d0 = decimate(&rows_index, 4, &ShiftMap::zeros(1)).unwrap();
        let d1 = decimate(&rows_index, 4, &ShiftMap::new(vec![(1, 2)], 4).unwrap()).unwrap();
        for (a, b) in d0.data().iter().zip(d1.data()) {
            assert_eq!(*b, a + 1.0);
        }
    }

    #[test]
    fn decimate_errors() {
        let r = ramp(8, 6);
        assert!(decimate(&r, 4, &ShiftMap::zeros(1)).is_err());
        let r = ramp(8, 8);
        assert!(decimate(&r, 4, &ShiftMap::zeros(2)).is_err());
        assert!(decimate(&r, 2, &ShiftMap::new(vec![(3, 0)], 4).unwrap()).is_err());
    }

    #[test]
    fn decimate_inverts_upscale() {
        let x = random_raster(16, 16, 3, 4);
        let up = interpolate_upscale(&x, 4).unwrap();
        assert_eq!(decimate(&up, 4, &ShiftMap::zeros(3)).unwrap(), x);
    }

    #[test]
    fn shift_identity_and_inverse() {
        let r = random_raster(12, 10, 2, 9);
        assert_eq!(shift_raster(&r, &[(0, 0), (0, 0)]).unwrap(), r);
        let s = shift_raster(&r, &[(2, -3), (-1, 1)]).unwrap();
        let back = shift_raster(&s, &[(-2, 3), (1, -1)]).unwrap();
        for (b, frame) in [(0usize, (2usize, 3usize)), (1, (1, 1))] {
            for i in frame.0..12 - frame.0 {
                for j in frame.1..10 - frame.1 {
                    assert_eq!(back.get(b, i, j), r.get(b, i, j));
                }
            }
        }
        assert!(shift_raster(&r, &[(12, 0), (0, 0)]).is_err());
    }

    #[test]
    fn back_shift_restores_correlation() {
        // smooth random field, second copy displaced by (2, 1)
        let x = random_raster(64, 64, 1, 21);
        let k = crate::filtering::mtf_kernel(0.3, 4, 17).unwrap();
        let smooth = convolve(&x, &[k]).unwrap();
        let moved = shift_raster(&smooth, &[(2, 1)]).unwrap();
        let corr = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for (p, q) in a.iter().zip(b) {
                sab += (p - ma) * (q - mb);
                saa += (p - ma) * (p - ma);
                sbb += (q - mb) * (q - mb);
            }
            sab / (saa * sbb).sqrt()
        };
        let restored = shift_raster(&moved, &[(-2, -1)]).unwrap();
        assert!(corr(smooth.data(), restored.data()) > corr(smooth.data(), moved.data()));
    }

    #[test]
    fn decimate_shift_commute() {
        let x = random_raster(16, 20, 2, 13);
        let s = ShiftMap::new(vec![(1, 3), (2, 0)], 4).unwrap();
        let direct = decimate(&x, 4, &s).unwrap();
        let shifted = shift_raster(&x, &[(-1, -3), (-2, 0)]).unwrap();
        assert_eq!(decimate(&shifted, 4, &ShiftMap::zeros(2)).unwrap(), direct);
    }

    fn constant_pair(pan_n: usize, bands: usize, v: f64) -> PanMsPair {
        validate_pair(
            Raster::filled(pan_n, pan_n, 1, v).unwrap(),
            Raster::filled(pan_n / 4, pan_n / 4, bands, v).unwrap(),
            SensorSpec::with_default_gains("t", 4, bands).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn wald_constant_pair() {
        let pair = constant_pair(256, 3, 321.0);
        let (red, gt) = wald_downgrade(&pair, None).unwrap();
        assert_eq!((red.pan().rows(), red.ms().rows()), (64, 16));
        assert!(red.pan().data().iter().all(|v| (v - 321.0).abs() < 1e-9));
        assert!(red.ms().data().iter().all(|v| (v - 321.0).abs() < 1e-9));
        assert_eq!(&gt, pair.ms());
    }

    #[test]
    fn wald_geometry_full_size() {
        let pair = constant_pair(2048, 8, 5.0);
        let (red, gt) = wald_downgrade(&pair, Some((1, 1))).unwrap();
        assert_eq!((red.pan().rows(), red.pan().cols()), (512, 512));
        assert_eq!((red.ms().rows(), red.ms().cols(), red.ms().bands()), (128, 128, 8));
        assert_eq!(gt.rows(), 512);
    }

    #[test]
    fn wald_misalign_shifts_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ms = Raster::new(
            64,
            64,
            2,
            (0..64 * 64 * 2).map(|_| rng.random::<f64>() * 100.0).collect(),
            100.0,
        )
        .unwrap();
        let pan = Raster::filled(256, 256, 1, 1.0).unwrap();
        let pair = validate_pair(pan, ms, SensorSpec::with_default_gains("t", 4, 2).unwrap()).unwrap();
        let (aligned, _) = wald_downgrade(&pair, None).unwrap();
        let (moved, _) = wald_downgrade(&pair, Some((1, 1))).unwrap();
        let lp = convolve(pair.ms(), &mtf_kernels(&pair.sensor().ms_nyquist_gains, 4).unwrap()).unwrap();
        for b in 0..2 {
            for i in 0..16 {
                for j in 0..16 {
                    assert_eq!(aligned.ms().get(b, i, j), lp.get(b, 4 * i, 4 * j));
                    assert_eq!(moved.ms().get(b, i, j), lp.get(b, 4 * i + 1, 4 * j + 1));
                }
            }
        }
        assert!(wald_downgrade(&pair, Some((4, 0))).is_err());
    }
}
