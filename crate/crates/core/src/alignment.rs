//! Band-wise integer shift estimation between the low-pass PAN and the
//! interpolated MS bands.
//!
//! For every band the `ratio x ratio` candidate offsets are scored
//! exhaustively by the global correlation coefficient; the winner is the
//! decimation offset that realigns the fused product with the MS grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanes;
use crate::DEGENERACY_EPS;
use crate::filtering::{convolve, default_mtf_kernel, interpolate_upscale_with, mirror, Interpolator};
use crate::raster::{Raster, SensorSpec, ShiftMap};

/// Pearson correlation of two equally sized sample sets (two-pass).
pub fn global_corrcoef(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::geometry(format!(
            "correlation of {} vs {} samples",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least 2 samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("zero variance in correlation input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// How candidate translations treat samples shifted in from outside the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentMode {
    /// Translate with mirror fill and correlate over the whole frame.
    #[default]
    MirrorFill,
    /// Correlate only over the region covered by the translated band.
    ValidRegion,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlignOptions {
    pub mode: AlignmentMode,
    pub interpolator: Interpolator,
}

/// Outcome of the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftEstimate {
    pub shifts: ShiftMap,
    /// Correlation of the winning candidate per band (NaN when degenerate).
    pub peak_correlations: Vec<f64>,
    /// Bands whose correlation was undefined; their offset is `(0, 0)`.
    pub degenerate: Vec<bool>,
    /// Per band, the `ratio * ratio` candidate scores in row-major `(m, n)` order.
    pub scores: Vec<Vec<f64>>,
}

pub fn estimate_band_shifts(pan: &Raster, ms: &Raster, sensor: &SensorSpec) -> Result<ShiftEstimate> {
    estimate_band_shifts_with(pan, ms, sensor, AlignOptions::default())
}

pub fn estimate_band_shifts_with(
    pan: &Raster,
    ms: &Raster,
    sensor: &SensorSpec,
    opts: AlignOptions,
) -> Result<ShiftEstimate> {
    let r = sensor.ratio;
    if pan.bands() != 1 || pan.rows() != r * ms.rows() || pan.cols() != r * ms.cols() {
        return Err(Error::geometry(format!(
            "PAN {}x{}x{} does not match MS {}x{} at ratio {r}",
            pan.rows(),
            pan.cols(),
            pan.bands(),
            ms.rows(),
            ms.cols()
        )));
    }
    let pan_lp = convolve(pan, &[default_mtf_kernel(sensor.pan_nyquist_gain, r)?])?;
    let ms_up = interpolate_upscale_with(ms, r, opts.interpolator)?;
    estimate_shifts_from(pan_lp.band(0), &ms_up, r, opts.mode)
}

/// Search on precomputed low-pass PAN and interpolated MS (same grid).
pub fn estimate_shifts_from(
    pan_lp: &[f64],
    ms_up: &Raster,
    ratio: usize,
    mode: AlignmentMode,
) -> Result<ShiftEstimate> {
    if pan_lp.len() != ms_up.plane_len() {
        return Err(Error::geometry("low-pass PAN and interpolated MS differ in size"));
    }
    if ratio >= ms_up.rows() || ratio >= ms_up.cols() {
        return Err(Error::geometry("image too small for shift search"));
    }
    let (rows, cols) = (ms_up.rows(), ms_up.cols());
    // per-sample variance below which a candidate counts as degenerate
    let floor = DEGENERACY_EPS * ms_up.dynamic_range().powi(2);
    let centred = |v: &[f64]| {
        let mean = lanes::sum(v) / v.len() as f64;
        v.iter().map(|x| x - mean).collect::<Vec<f64>>()
    };
    let pc = match mode {
        AlignmentMode::MirrorFill => centred(pan_lp),
        AlignmentMode::ValidRegion => Vec::new(),
    };
    let spp = lanes::dot(&pc, &pc);
    let per_band: Vec<(Vec<f64>, Option<(usize, usize, f64)>)> = (0..ms_up.bands())
        .into_par_iter()
        .map(|b| {
            let scores: Vec<f64> = match mode {
                AlignmentMode::MirrorFill => {
                    let bc = centred(ms_up.band(b));
                    mirror_scores(&pc, spp, &bc, rows, cols, ratio, floor)
                }
                AlignmentMode::ValidRegion => (0..ratio * ratio)
                    .map(|k| valid_corr(pan_lp, ms_up.band(b), rows, cols, k / ratio, k % ratio, floor))
                    .collect(),
            }
            .into_iter()
            .map(|s| s.unwrap_or(f64::NAN))
            .collect();
            let mut best: Option<(usize, usize, f64)> = None;
            for (k, &s) in scores.iter().enumerate() {
                if s.is_nan() {
                    continue;
                }
                if best.is_none_or(|(_, _, v)| s > v) {
                    best = Some((k / ratio, k % ratio, s));
                }
            }
            (scores, best)
        })
        .collect();

    let mut offsets = Vec::with_capacity(per_band.len());
    let mut peaks = Vec::with_capacity(per_band.len());
    let mut degenerate = Vec::with_capacity(per_band.len());
    let mut scores = Vec::with_capacity(per_band.len());
    for (s, best) in per_band {
        match best {
            Some((m, n, v)) => {
                offsets.push((m, n));
                peaks.push(v);
                degenerate.push(false);
            }
            None => {
                offsets.push((0, 0));
                peaks.push(f64::NAN);
                degenerate.push(true);
            }
        }
        scores.push(s);
    }
    Ok(ShiftEstimate {
        shifts: ShiftMap::new(offsets, ratio)?,
        peak_correlations: peaks,
        degenerate,
        scores,
    })
}

/// Row sums of a plane and of its square, plus the sums of the first and
/// last `k < ratio` samples of every row. Enough to get the sum and sum of
/// squares of any mirror-filled translation by less than `ratio`.
struct EdgeSums {
    ratio: usize,
    rows: Vec<[f64; 2]>,
    head: Vec<[f64; 2]>,
    tail: Vec<[f64; 2]>,
}

impl EdgeSums {
    fn new(band: &[f64], rows: usize, cols: usize, ratio: usize) -> Self {
        let mut out = Self {
            ratio,
            rows: Vec::with_capacity(rows),
            head: Vec::with_capacity(rows * ratio),
            tail: Vec::with_capacity(rows * ratio),
        };
        for row in band.chunks_exact(cols) {
            out.rows.push([lanes::sum(row), lanes::dot(row, row)]);
            let (mut h, mut t) = ([0.0; 2], [0.0; 2]);
            for k in 0..ratio {
                out.head.push(h);
                out.tail.push(t);
                let (a, b) = (row[k], row[cols - 1 - k]);
                h = [h[0] + a, h[1] + a * a];
                t = [t[0] + b, t[1] + b * b];
            }
        }
        out
    }

    /// Sum and sum of squares of the plane translated by `(m, n)`. A shift
    /// by `m` with mirror fill repeats the first `m` rows and drops the last `m`.
    fn translated(&self, m: usize, n: usize) -> [f64; 2] {
        let rows = self.rows.len();
        let line = |k: usize| {
            let (r, h, t) = (self.rows[k], self.head[k * self.ratio + n], self.tail[k * self.ratio + n]);
            [r[0] + h[0] - t[0], r[1] + h[1] - t[1]]
        };
        let mut acc = [0.0; 2];
        for k in 0..rows {
            let w = 1.0 + f64::from(u8::from(k < m)) - f64::from(u8::from(k >= rows - m));
            if w != 0.0 {
                let l = line(k);
                acc[0] += w * l[0];
                acc[1] += w * l[1];
            }
        }
        acc
    }
}

/// Correlations of the centred PAN `pc` (sum of squares `spp`) with the
/// centred band translated by every `(m, n)` and mirror-filled, without
/// materialising the translations. Rows are the outer loop so each PAN row
/// is read once for all candidates.
fn mirror_scores(
    pc: &[f64],
    spp: f64,
    band: &[f64],
    rows: usize,
    cols: usize,
    ratio: usize,
    floor: f64,
) -> Vec<Option<f64>> {
    let len = (rows * cols) as f64;
    let edges = EdgeSums::new(band, rows, cols, ratio);
    let mut cross = vec![0.0; ratio * ratio];
    for i in 0..rows {
        let prow = &pc[i * cols..(i + 1) * cols];
        for m in 0..ratio {
            let src = &band[mirror(i as isize - m as isize, rows) * cols..][..cols];
            for n in 0..ratio {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += prow[j] * src[mirror(j as isize - n as isize, cols)];
                }
                cross[m * ratio + n] += acc + lanes::dot(&prow[n..], &src[..cols - n]);
            }
        }
    }
    (0..ratio * ratio)
        .map(|k| {
            let [sb, sbb] = edges.translated(k / ratio, k % ratio);
            let var_b = sbb - sb * sb / len;
            if spp <= floor * len || var_b <= floor * len {
                return None;
            }
            // pc has zero mean, so the band's own mean drops out of the cross term
            Some((cross[k] / (spp * var_b).sqrt()).clamp(-1.0, 1.0))
        })
        .collect()
}

fn valid_corr(
    p: &[f64],
    band: &[f64],
    rows: usize,
    cols: usize,
    m: usize,
    n: usize,
    floor: f64,
) -> Option<f64> {
    let (h, w) = (rows - m, cols - n);
    let mut xs = Vec::with_capacity(h * w);
    let mut ys = Vec::with_capacity(h * w);
    for i in m..rows {
        xs.extend_from_slice(&p[i * cols + n..(i + 1) * cols]);
        ys.extend_from_slice(&band[(i - m) * cols..(i - m) * cols + w]);
    }
    let var = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
    };
    if var(&xs) <= floor || var(&ys) <= floor {
        return None;
    }
    global_corrcoef(&xs, &ys).ok()
}
