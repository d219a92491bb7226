//! No-reference full-resolution indexes.
//!
//! The reprojection family compares the input MS with the fused product
//! brought back to MS geometry: MTF low-pass filtering followed by a
//! decimation whose per-band phase is the shift that best aligns the
//! interpolated MS with the low-pass PAN. On aligned data every shift is
//! `(0, 0)` and the reprojection reduces to plain MTF decimation, so
//! `1 - R-Q2n` coincides with Khan's index.
//!
//! `D_rho` is one minus the mean local Pearson correlation between the PAN
//! and each fused band over dense `sigma x sigma` windows, computed with
//! rolling window sums.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{estimate_shifts_from, AlignOptions, ShiftEstimate};
use crate::error::{Error, Result};
use crate::filtering::{
    convolve, default_mtf_kernel, interpolate_upscale, interpolate_upscale_with, mtf_kernels,
    windowed_sinc_kernel, Kernel,
};
use crate::raster::{PanMsPair, Raster, ShiftMap};
use crate::ref_indexes::{
    ergas, q2n_detailed, sam_detailed, uiqi_moments, uiqi_moments_many, Averaged, AngleUnit, BlockMoments, DEFAULT_BLOCK,
};
use crate::report::{names, ScoreReport};
use crate::resampling::decimate;
use crate::{config, lanes, DEGENERACY_EPS};

/// Reference-based metric applied after reprojection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RMetric {
    Sam,
    Ergas,
    Q2n,
}

/// Filter used to bring the PAN to MS scale inside `D_S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanDownscale {
    /// Gaussian matched to the PAN Nyquist gain.
    #[default]
    Mtf,
    /// Hamming-windowed sinc with cut-off at the MS Nyquist frequency.
    Ideal,
}

fn ms_lowpass(fused: &Raster, pair: &PanMsPair) -> Result<Raster> {
    convolve(fused, &mtf_kernels(&pair.sensor().ms_nyquist_gains, pair.ratio())?)
}

fn pan_lowpass(pair: &PanMsPair) -> Result<Raster> {
    convolve(
        pair.pan(),
        &[default_mtf_kernel(pair.sensor().pan_nyquist_gain, pair.ratio())?],
    )
}

fn shifts_for(pair: &PanMsPair, pan_lp: &Raster, align: AlignOptions) -> Result<ShiftEstimate> {
    let ms_up = interpolate_upscale_with(pair.ms(), pair.ratio(), align.interpolator)?;
    estimate_shifts_from(pan_lp.band(0), &ms_up, pair.ratio(), align.mode)
}

/// Low-pass filtered, shift-aligned decimation of `fused` plus the shifts used.
pub fn reproject_detailed(fused: &Raster, pair: &PanMsPair) -> Result<(Raster, ShiftEstimate)> {
    pair.check_fused(fused)?;
    let est = shifts_for(pair, &pan_lowpass(pair)?, AlignOptions::default())?;
    let lp = ms_lowpass(fused, pair)?;
    Ok((decimate(&lp, pair.ratio(), &est.shifts)?, est))
}

/// The fused product projected onto the MS grid.
pub fn reproject(fused: &Raster, pair: &PanMsPair) -> Result<Raster> {
    reproject_detailed(fused, pair).map(|(r, _)| r)
}

fn apply_metric(metric: RMetric, ms: &Raster, projected: &Raster, ratio: usize, block: usize) -> Result<f64> {
    match metric {
        RMetric::Sam => Ok(sam_detailed(ms, projected, AngleUnit::Degrees)?.value),
        RMetric::Ergas => ergas(ms, projected, ratio),
        RMetric::Q2n => Ok(q2n_detailed(ms, projected, block)?.value),
    }
}

/// Reprojection index: `metric(reproject(fused), ms)`. SAM is in degrees.
pub fn r_index(fused: &Raster, pair: &PanMsPair, metric: RMetric) -> Result<f64> {
    let projected = reproject(fused, pair)?;
    apply_metric(metric, pair.ms(), &projected, pair.ratio(), DEFAULT_BLOCK)
}

/// Khan's index with band-wise aligned decimation, `1 - R-Q2n`.
pub fn d_lambda_align(fused: &Raster, pair: &PanMsPair) -> Result<f64> {
    Ok(1.0 - r_index(fused, pair, RMetric::Q2n)?)
}

/// Khan's spectral distortion: MTF filtering and decimation at phase `(0, 0)`.
pub fn d_lambda_khan(fused: &Raster, pair: &PanMsPair) -> Result<f64> {
    pair.check_fused(fused)?;
    let lp = ms_lowpass(fused, pair)?;
    let dec = decimate(&lp, pair.ratio(), &ShiftMap::zeros(fused.bands()))?;
    Ok(1.0 - q2n_detailed(pair.ms(), &dec, DEFAULT_BLOCK)?.value)
}

/// Khan's index at full resolution against the interpolated MS.
pub fn d_lambda_khan_tilde(fused: &Raster, pair: &PanMsPair) -> Result<f64> {
    pair.check_fused(fused)?;
    let lp = ms_lowpass(fused, pair)?;
    let up = interpolate_upscale(pair.ms(), pair.ratio())?;
    Ok(1.0 - q2n_detailed(&up, &lp, DEFAULT_BLOCK)?.value)
}

/// Upsamples `ms` onto the grid of `fused` unless it is already there.
fn reference_on_grid<'a>(ms: &'a Raster, fused: &Raster) -> Result<Cow<'a, Raster>> {
    if ms.rows() == fused.rows() && ms.cols() == fused.cols() {
        return Ok(Cow::Borrowed(ms));
    }
    if fused.rows() % ms.rows() != 0
        || fused.cols() % ms.cols() != 0
        || fused.rows() / ms.rows() != fused.cols() / ms.cols()
    {
        return Err(Error::geometry(format!(
            "fused {}x{} is not an integer multiple of MS {}x{}",
            fused.rows(),
            fused.cols(),
            ms.rows(),
            ms.cols()
        )));
    }
    interpolate_upscale(ms, fused.rows() / ms.rows()).map(Cow::Owned)
}

/// Inter-band UIQI matrix, upper triangle in `(i, j), i < j` order.
fn interband_uiqi(r: &Raster, block: usize) -> Result<Vec<Averaged>> {
    let moments: Vec<BlockMoments> = (0..r.bands())
        .into_par_iter()
        .map(|b| BlockMoments::new(r.band(b), r.rows(), r.cols(), block))
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..r.bands())
        .flat_map(|i| (i + 1..r.bands()).map(move |j| (i, j)))
        .collect();
    let refs: Vec<(&BlockMoments, &BlockMoments)> = pairs.iter().map(|&(i, j)| (&moments[i], &moments[j])).collect();
    uiqi_moments_many(&refs, r.dynamic_range())
}

pub fn d_lambda(ms: &Raster, fused: &Raster, p: u32) -> Result<f64> {
    d_lambda_detailed(ms, fused, p, DEFAULT_BLOCK).map(|(v, _)| v)
}

/// QNR spectral distortion. The inter-band UIQIs of the reference are taken
/// on the MS interpolated to the fused grid, so that a pure interpolation
/// scores exactly zero. Returns the value and the excluded block count.
pub fn d_lambda_detailed(ms: &Raster, fused: &Raster, p: u32, block: usize) -> Result<(f64, usize)> {
    if ms.bands() < 2 || ms.bands() != fused.bands() {
        return Err(Error::param(format!(
            "D_lambda needs >= 2 matching bands, got {} and {}",
            ms.bands(),
            fused.bands()
        )));
    }
    if p == 0 {
        return Err(Error::param("D_lambda exponent must be >= 1"));
    }
    let reference = reference_on_grid(ms, fused)?;
    let q_ref = interband_uiqi(&reference, block)?;
    let q_fus = interband_uiqi(fused, block)?;
    let b = ms.bands() as f64;
    // each unordered pair counts twice in the ordered-pair mean
    let sum: f64 = q_ref
        .iter()
        .zip(&q_fus)
        .map(|(a, f)| 2.0 * (a.value - f.value).abs().powi(p as i32))
        .sum();
    let excluded = q_ref.iter().chain(&q_fus).map(|a| a.excluded).sum();
    Ok(((sum / (b * (b - 1.0))).powf(1.0 / p as f64), excluded))
}

fn pan_down(pair: &PanMsPair, how: PanDownscale, pan_lp: Option<&Raster>) -> Result<Raster> {
    let r = pair.ratio();
    let lp = match (how, pan_lp) {
        (PanDownscale::Mtf, Some(lp)) => lp.clone(),
        (PanDownscale::Mtf, None) => pan_lowpass(pair)?,
        (PanDownscale::Ideal, _) => {
            let size = config::filters().mtf_defaults.kernel_size(r);
            convolve(pair.pan(), &[windowed_sinc_kernel(r, size)?])?
        }
    };
    decimate(&lp, r, &ShiftMap::zeros(1))
}

fn d_s_core(
    fused: &Raster,
    pair: &PanMsPair,
    q: u32,
    block: usize,
    pan_small: &Raster,
) -> Result<(f64, usize)> {
    if q == 0 {
        return Err(Error::param("D_S exponent must be >= 1"));
    }
    let pan = pair.pan();
    let ms = pair.ms();
    let pan_hi = BlockMoments::new(pan.band(0), pan.rows(), pan.cols(), block)?;
    let pan_lo = BlockMoments::new(pan_small.band(0), ms.rows(), ms.cols(), block)?;
    let gaps: Vec<(f64, usize)> = (0..fused.bands())
        .into_par_iter()
        .map(|b| {
            let fb = BlockMoments::new(fused.band(b), fused.rows(), fused.cols(), block)?;
            let mb = BlockMoments::new(ms.band(b), ms.rows(), ms.cols(), block)?;
            let hi = uiqi_moments(&fb, &pan_hi, fused.dynamic_range())?;
            let lo = uiqi_moments(&mb, &pan_lo, ms.dynamic_range())?;
            Ok(((hi.value - lo.value).abs().powi(q as i32), hi.excluded + lo.excluded))
        })
        .collect::<Result<_>>()?;
    let mean = gaps.iter().map(|g| g.0).sum::<f64>() / fused.bands() as f64;
    Ok((mean.powf(1.0 / q as f64), gaps.iter().map(|g| g.1).sum()))
}

/// QNR spatial distortion: mean over bands of `|Q(fused_b, P) - Q(MS_b, P_down)|^q`, to the `1/q`.
pub fn d_s(fused: &Raster, pair: &PanMsPair, q: u32) -> Result<f64> {
    d_s_with(fused, pair, q, DEFAULT_BLOCK, PanDownscale::Mtf)
}

pub fn d_s_with(fused: &Raster, pair: &PanMsPair, q: u32, block: usize, how: PanDownscale) -> Result<f64> {
    pair.check_fused(fused)?;
    let pan_small = pan_down(pair, how, None)?;
    d_s_core(fused, pair, q, block, &pan_small).map(|(v, _)| v)
}

/// Local PAN/band correlations on valid `sigma x sigma` windows.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationField {
    rows: usize,
    cols: usize,
    bands: usize,
    sigma: usize,
    /// Band-sequential; `NaN` marks excluded windows.
    values: Vec<f64>,
    excluded_count: usize,
}

impl CorrelationField {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Correlation of the window whose top-left corner is `(row, col)`.
    pub fn get(&self, band: usize, row: usize, col: usize) -> Option<f64> {
        let v = self.values[(band * self.rows + row) * self.cols + col];
        (!v.is_nan()).then_some(v)
    }

    pub fn excluded_count(&self) -> usize {
        self.excluded_count
    }

    /// Mean over all retained windows and bands.
    pub fn mean(&self) -> Result<f64> {
        let mut total = RowMean::default();
        for band in self.values.chunks(self.rows * self.cols) {
            let mut acc = RowMean::default();
            band.chunks(self.cols).for_each(|row| acc.push(row));
            total.merge(&acc);
        }
        total.mean()
    }
}

/// Running mean over field rows, ignoring NaN. Rows are summed separately,
/// then per band, so streaming and stored fields agree exactly.
#[derive(Default)]
struct RowMean {
    sum: f64,
    count: usize,
}

impl RowMean {
    fn push(&mut self, row: &[f64]) {
        let mut s = 0.0;
        for v in row.iter().filter(|v| !v.is_nan()) {
            s += v;
            self.count += 1;
        }
        self.sum += s;
    }

    fn merge(&mut self, other: &RowMean) {
        self.sum += other.sum;
        self.count += other.count;
    }

    fn mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::Degenerate("every correlation window was excluded".into()));
        }
        Ok(self.sum / self.count as f64)
    }
}

fn plane_mean(v: &[f64]) -> f64 {
    lanes::sum(v) / v.len() as f64
}

/// Rolling-sum local correlation of one band, handed to `sink` one output
/// row at a time. Both planes are centred on the given means first.
#[allow(clippy::too_many_arguments)]
fn local_corr_plane(
    p: &[f64],
    mp: f64,
    m: &[f64],
    mm: f64,
    rows: usize,
    cols: usize,
    sigma: usize,
    floor: f64,
    mut sink: impl FnMut(&[f64]),
) {
    let (orows, ocols) = (rows - sigma + 1, cols - sigma + 1);
    let inv_n = 1.0 / (sigma * sigma) as f64;
    // column sums over the current strip of `sigma` rows: p, p^2, m, m^2, p*m
    let mut col: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; cols]);
    let add_row = |col: &mut [Vec<f64>; 5], r: usize, sign: f64| {
        let (pr, mr) = (&p[r * cols..(r + 1) * cols], &m[r * cols..(r + 1) * cols]);
        let [c0, c1, c2, c3, c4] = col;
        for j in 0..cols {
            let (a, b) = (pr[j] - mp, mr[j] - mm);
            c0[j] += sign * a;
            c1[j] += sign * (a * a);
            c2[j] += sign * b;
            c3[j] += sign * (b * b);
            c4[j] += sign * (a * b);
        }
    };
    for r in 0..sigma {
        add_row(&mut col, r, 1.0);
    }
    let mut row = vec![0.0; ocols];
    let mut prefix: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; cols + 1]);
    for orow in 0..orows {
        if orow > 0 {
            add_row(&mut col, orow + sigma - 1, 1.0);
            add_row(&mut col, orow - 1, -1.0);
        }
        {
            let [p0, p1, p2, p3, p4] = &mut prefix;
            let [c0, c1, c2, c3, c4] = &col;
            // five independent chains interleaved
            for j in 0..cols {
                p0[j + 1] = p0[j] + c0[j];
                p1[j + 1] = p1[j] + c1[j];
                p2[j + 1] = p2[j] + c2[j];
                p3[j + 1] = p3[j] + c3[j];
                p4[j + 1] = p4[j] + c4[j];
            }
        }
        let [p0, p1, p2, p3, p4] = &prefix;
        let (a0, a1, a2, a3, a4) = (&p0[sigma..], &p1[sigma..], &p2[sigma..], &p3[sigma..], &p4[sigma..]);
        for (j, o) in row.iter_mut().enumerate() {
            let sp = a0[j] - p0[j];
            let sm = a2[j] - p2[j];
            let vp = (a1[j] - p1[j] - sp * sp * inv_n) * inv_n;
            let vm = (a3[j] - p3[j] - sm * sm * inv_n) * inv_n;
            let cov = (a4[j] - p4[j] - sp * sm * inv_n) * inv_n;
            let r = (cov / (vp * vm).sqrt()).clamp(-1.0, 1.0);
            *o = if vp >= floor && vm >= floor { r } else { f64::NAN };
        }
        sink(&row);
    }
}

/// Dense local correlation between `pan` and every band of `fused`.
pub fn local_correlation_field(fused: &Raster, pan: &Raster, sigma: usize) -> Result<CorrelationField> {
    check_field_args(fused, pan, sigma)?;
    let floor = DEGENERACY_EPS * pan.dynamic_range() * pan.dynamic_range();
    let mp = plane_mean(pan.band(0));
    let (rows, cols) = (fused.rows(), fused.cols());
    let planes: Vec<Vec<f64>> = (0..fused.bands())
        .into_par_iter()
        .map(|b| {
            let mut values = Vec::with_capacity((rows - sigma + 1) * (cols - sigma + 1));
            let band = fused.band(b);
            local_corr_plane(pan.band(0), mp, band, plane_mean(band), rows, cols, sigma, floor, |r| {
                values.extend_from_slice(r)
            });
            values
        })
        .collect();
    let values: Vec<f64> = planes.concat();
    Ok(CorrelationField {
        rows: rows - sigma + 1,
        cols: cols - sigma + 1,
        bands: fused.bands(),
        sigma,
        excluded_count: values.iter().filter(|v| v.is_nan()).count(),
        values,
    })
}

fn check_field_args(fused: &Raster, pan: &Raster, sigma: usize) -> Result<()> {
    if pan.bands() != 1 || pan.rows() != fused.rows() || pan.cols() != fused.cols() {
        return Err(Error::geometry(format!(
            "PAN {}x{}x{} and fused {}x{} grids differ",
            pan.rows(),
            pan.cols(),
            pan.bands(),
            fused.rows(),
            fused.cols()
        )));
    }
    if sigma < 2 {
        return Err(Error::param(format!("window size must be >= 2, got {sigma}")));
    }
    if sigma > fused.rows().min(fused.cols()) {
        return Err(Error::geometry(format!(
            "window {sigma} larger than {}x{} image",
            fused.rows(),
            fused.cols()
        )));
    }
    Ok(())
}

/// Mean local correlation and excluded window count without storing the field.
fn mean_local_correlation(fused: &Raster, pan: &Raster, sigma: usize) -> Result<(f64, usize)> {
    check_field_args(fused, pan, sigma)?;
    let floor = DEGENERACY_EPS * pan.dynamic_range() * pan.dynamic_range();
    let mp = plane_mean(pan.band(0));
    let (rows, cols) = (fused.rows(), fused.cols());
    let per_band: Vec<(RowMean, usize)> = (0..fused.bands())
        .into_par_iter()
        .map(|b| {
            let (mut acc, mut excluded) = (RowMean::default(), 0);
            let band = fused.band(b);
            local_corr_plane(pan.band(0), mp, band, plane_mean(band), rows, cols, sigma, floor, |r| {
                acc.push(r);
                excluded += r.iter().filter(|v| v.is_nan()).count();
            });
            (acc, excluded)
        })
        .collect();
    let mut total = RowMean::default();
    let mut excluded = 0;
    for (acc, ex) in &per_band {
        total.merge(acc);
        excluded += ex;
    }
    Ok((total.mean()?, excluded))
}

/// `1 - mean local correlation`; 0 means perfect local correlation.
pub fn d_rho(fused: &Raster, pan: &Raster, sigma: usize) -> Result<f64> {
    Ok(1.0 - mean_local_correlation(fused, pan, sigma)?.0)
}

/// `ms - reproject(fused)`, band by band on the MS grid.
pub fn reprojection_error_map(fused: &Raster, pair: &PanMsPair) -> Result<Raster> {
    let projected = reproject(fused, pair)?;
    error_map(pair.ms(), &projected)
}

fn error_map(ms: &Raster, projected: &Raster) -> Result<Raster> {
    Raster::new(
        ms.rows(),
        ms.cols(),
        ms.bands(),
        ms.data().iter().zip(projected.data()).map(|(a, b)| a - b).collect(),
        ms.dynamic_range(),
    )
}

/// Parameters of a full-resolution evaluation.
#[derive(Debug, Clone, Copy)]
pub struct FrConfig {
    /// Local correlation window; defaults to the sensor ratio.
    pub sigma: Option<usize>,
    pub p: u32,
    pub q: u32,
    pub block: usize,
    pub align: AlignOptions,
    pub pan_downscale: PanDownscale,
}

impl Default for FrConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            p: 1,
            q: 1,
            block: DEFAULT_BLOCK,
            align: AlignOptions::default(),
            pan_downscale: PanDownscale::Mtf,
        }
    }
}

/// Everything produced by [`evaluate_fr`].
#[derive(Debug, Clone)]
pub struct FrEvaluation {
    pub report: ScoreReport,
    pub shifts: ShiftEstimate,
    /// `ms - reprojection`
    pub error_map: Raster,
}

/// Computes the whole full-resolution suite, sharing the filtered and
/// interpolated intermediates between indexes.
pub fn evaluate_fr(fused: &Raster, pair: &PanMsPair, cfg: &FrConfig) -> Result<FrEvaluation> {
    pair.check_fused(fused)?;
    let r = pair.ratio();
    let ms = pair.ms();
    let bands = ms.bands();

    let ms_up = interpolate_upscale_with(ms, r, cfg.align.interpolator)?;
    let pan_lp = pan_lowpass(pair)?;
    let shifts = estimate_shifts_from(pan_lp.band(0), &ms_up, r, cfg.align.mode)?;
    let fused_lp = ms_lowpass(fused, pair)?;
    let projected = decimate(&fused_lp, r, &shifts.shifts)?;

    let mut report = ScoreReport::new("", "");
    let mut excluded = std::collections::BTreeMap::new();

    let rsam = sam_detailed(ms, &projected, AngleUnit::Degrees)?;
    report.insert(names::R_SAM, rsam.value);
    excluded.insert(names::R_SAM.to_string(), rsam.excluded);
    report.insert(names::R_ERGAS, ergas(ms, &projected, r)?);
    let rq = q2n_detailed(ms, &projected, cfg.block)?;
    report.insert(names::R_Q2N, rq.value);
    report.insert(names::D_LAMBDA_K_ALIGN, 1.0 - rq.value);
    excluded.insert(names::R_Q2N.to_string(), rq.excluded);

    let khan = if shifts.shifts.is_zero() {
        rq
    } else {
        let dec = decimate(&fused_lp, r, &ShiftMap::zeros(bands))?;
        q2n_detailed(ms, &dec, cfg.block)?
    };
    report.insert(names::D_LAMBDA_K, 1.0 - khan.value);
    excluded.insert(names::D_LAMBDA_K.to_string(), khan.excluded);

    let tilde = q2n_detailed(&ms_up, &fused_lp, cfg.block)?;
    report.insert(names::D_LAMBDA_K_TILDE, 1.0 - tilde.value);
    excluded.insert(names::D_LAMBDA_K_TILDE.to_string(), tilde.excluded);
    drop(fused_lp);

    let (dl, dl_ex) = if cfg.align.interpolator == Default::default() {
        d_lambda_detailed(&ms_up, fused, cfg.p, cfg.block)?
    } else {
        d_lambda_detailed(ms, fused, cfg.p, cfg.block)?
    };
    report.insert(names::D_LAMBDA, dl);
    excluded.insert(names::D_LAMBDA.to_string(), dl_ex);
    drop(ms_up);

    let pan_small = match cfg.pan_downscale {
        PanDownscale::Mtf => pan_down(pair, PanDownscale::Mtf, Some(&pan_lp))?,
        how => pan_down(pair, how, None)?,
    };
    let (ds, ds_ex) = d_s_core(fused, pair, cfg.q, cfg.block, &pan_small)?;
    report.insert(names::D_S, ds);
    excluded.insert(names::D_S.to_string(), ds_ex);

    let (rho, rho_ex) = mean_local_correlation(fused, pair.pan(), cfg.sigma.unwrap_or(r))?;
    report.insert(names::D_RHO, 1.0 - rho);
    excluded.insert(names::D_RHO.to_string(), rho_ex);

    report.diagnostics.shifts = shifts.shifts.offsets().iter().map(|&(a, b)| [a, b]).collect();
    report.diagnostics.peak_correlations = shifts
        .peak_correlations
        .iter()
        .map(|&c| (!c.is_nan()).then_some(c))
        .collect();
    report.diagnostics.degenerate_bands = shifts
        .degenerate
        .iter()
        .enumerate()
        .filter_map(|(b, &d)| d.then_some(b))
        .collect();
    report.diagnostics.excluded_windows = excluded;

    let error_map = error_map(ms, &projected)?;
    Ok(FrEvaluation {
        report,
        shifts,
        error_map,
    })
}

/// Kernel list used to reproject a fused product of `pair` (one per band).
pub fn reprojection_kernels(pair: &PanMsPair) -> Result<Vec<Kernel>> {
    mtf_kernels(&pair.sensor().ms_nyquist_gains, pair.ratio())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{validate_pair, SensorSpec};
    use crate::ref_indexes::uiqi;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raster(rows: usize, cols: usize, bands: usize, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols * bands).map(|_| 1.0 + rng.random::<f64>()).collect();
        Raster::new(rows, cols, bands, data, 2.0).unwrap()
    }

    fn smooth(r: &Raster, sigma: f64) -> Raster {
        let k = Kernel::gaussian(sigma, 13).unwrap();
        convolve(r, &vec![k; r.bands()]).unwrap()
    }

    fn pair(seed: u64, bands: usize) -> PanMsPair {
        let pan = smooth(&random_raster(128, 128, 1, seed), 1.5);
        let ms = smooth(&random_raster(32, 32, bands, seed + 1), 1.0);
        validate_pair(pan, ms, SensorSpec::with_default_gains("t", 4, bands).unwrap()).unwrap()
    }

    /// Direct window-by-window Pearson correlation.
    fn naive_field(fused: &Raster, pan: &Raster, sigma: usize) -> Vec<Option<f64>> {
        let floor = DEGENERACY_EPS * pan.dynamic_range().powi(2);
        let mut out = Vec::new();
        for b in 0..fused.bands() {
            for i in 0..=fused.rows() - sigma {
                for j in 0..=fused.cols() - sigma {
                    let (mut xs, mut ys) = (Vec::new(), Vec::new());
                    for di in 0..sigma {
                        for dj in 0..sigma {
                            xs.push(pan.get(0, i + di, j + dj));
                            ys.push(fused.get(b, i + di, j + dj));
                        }
                    }
                    let n = xs.len() as f64;
                    let mx = xs.iter().sum::<f64>() / n;
                    let my = ys.iter().sum::<f64>() / n;
                    let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
                    let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
                    if vx < floor || vy < floor {
                        out.push(None);
                        continue;
                    }
                    let c = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
                    out.push(Some(c / (vx * vy).sqrt()));
                }
            }
        }
        out
    }

    #[test]
    fn field_matches_naive_windows() {
        let pan = random_raster(16, 16, 1, 1);
        let fused = random_raster(16, 16, 2, 2);
        let f = local_correlation_field(&fused, &pan, 4).unwrap();
        assert_eq!((f.rows(), f.cols(), f.bands()), (13, 13, 2));
        let naive = naive_field(&fused, &pan, 4);
        for (k, n) in naive.iter().enumerate() {
            let v = f.values()[k];
            match n {
                Some(e) => assert!((v - e).abs() <= 1e-9, "{v} vs {e}"),
                None => assert!(v.is_nan()),
            }
        }
    }

    #[test]
    fn field_of_pan_and_affine_copies_is_one() {
        let pan = random_raster(20, 20, 1, 3);
        let copies = Raster::stack(&[&pan, &pan.map(|v| 3.0 * v + 7.0).unwrap()]).unwrap();
        let f = local_correlation_field(&copies, &pan, 4).unwrap();
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!(d_rho(&copies, &pan, 4).unwrap().abs() < 1e-9);
    }

    #[test]
    fn field_excludes_flat_windows_and_checks_arguments() {
        let pan = Raster::filled(8, 8, 1, 3.0).unwrap();
        let fused = random_raster(8, 8, 1, 4);
        let f = local_correlation_field(&fused, &pan, 4).unwrap();
        assert_eq!(f.excluded_count(), 25);
        assert!(f.mean().is_err());
        assert!(d_rho(&fused, &pan, 4).is_err());
        assert!(local_correlation_field(&fused, &pan, 1).is_err());
        assert!(local_correlation_field(&fused, &pan, 9).is_err());
        assert!(local_correlation_field(&random_raster(8, 9, 1, 1), &pan, 4).is_err());
    }

    #[test]
    fn independent_noise_has_d_rho_near_one() {
        let pan = random_raster(64, 64, 1, 5);
        let fused = random_raster(64, 64, 4, 6);
        let d = d_rho(&fused, &pan, 4).unwrap();
        assert!((d - 1.0).abs() < 0.05, "{d}");
    }

    #[test]
    fn d_lambda_of_interpolated_ms_is_zero() {
        let p = pair(7, 4);
        let up = interpolate_upscale(p.ms(), 4).unwrap();
        assert_eq!(d_lambda(p.ms(), &up, 1).unwrap(), 0.0);
        assert_eq!(d_lambda(p.ms(), &up, 2).unwrap(), 0.0);
    }

    #[test]
    fn d_lambda_detects_band_swap() {
        let p = pair(8, 3);
        let up = interpolate_upscale(p.ms(), 4).unwrap();
        let swapped = Raster::stack(&[&up.band_raster(1), &up.band_raster(0), &up.band_raster(2)]).unwrap();
        let perturbed = Raster::stack(&[
            &up.band_raster(0),
            &up.band_raster(1),
            &smooth(&random_raster(128, 128, 1, 99), 2.0),
        ])
        .unwrap();
        assert!(d_lambda(p.ms(), &swapped, 1).unwrap() >= 0.0);
        assert!(d_lambda(p.ms(), &perturbed, 1).unwrap() > 0.0);
        assert!(d_lambda(p.ms(), &perturbed, 2).unwrap() > 0.0);
        assert!(d_lambda(&p.ms().band_raster(0), &up.band_raster(0), 1).is_err());
    }

    #[test]
    fn d_s_matches_direct_recomputation() {
        let p = pair(9, 3);
        let fused = smooth(&random_raster(128, 128, 3, 10), 1.0);
        let pan_small = decimate(&pan_lowpass(&p).unwrap(), 4, &ShiftMap::zeros(1)).unwrap();
        for q in [1u32, 2] {
            let mut acc = 0.0;
            for b in 0..3 {
                let hi = uiqi(&fused.band_raster(b), p.pan(), 32).unwrap();
                let lo = uiqi(&p.ms().band_raster(b), &pan_small, 32).unwrap();
                acc += (hi - lo).abs().powi(q as i32);
            }
            let expected = (acc / 3.0).powf(1.0 / q as f64);
            assert!((d_s(&fused, &p, q).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn d_s_zero_when_both_terms_are_one() {
        let pan = smooth(&random_raster(128, 128, 1, 11), 1.5);
        let pan_small = decimate(
            &convolve(&pan, &[default_mtf_kernel(0.15, 4).unwrap()]).unwrap(),
            4,
            &ShiftMap::zeros(1),
        )
        .unwrap();
        let ms = Raster::stack(&[&pan_small, &pan_small]).unwrap();
        let fused = Raster::stack(&[&pan, &pan]).unwrap();
        let p = validate_pair(pan, ms, SensorSpec::with_default_gains("t", 4, 2).unwrap()).unwrap();
        assert!(d_s(&fused, &p, 1).unwrap().abs() < 1e-12);
        assert!(d_s_with(&fused, &p, 1, 32, PanDownscale::Ideal).unwrap() >= 0.0);
    }

    #[test]
    fn reprojection_of_constant_is_constant() {
        let p = pair(12, 2);
        let c = Raster::filled(128, 128, 2, 42.0).unwrap();
        let r = reproject(&c, &p).unwrap();
        assert_eq!((r.rows(), r.cols()), (32, 32));
        assert!(r.data().iter().all(|v| (v - 42.0).abs() < 1e-9));
    }

    #[test]
    fn error_map_of_bias_is_negative_bias() {
        let p = pair(13, 2);
        let up = interpolate_upscale(p.ms(), 4).unwrap();
        let biased = up.map(|v| v + 5.0).unwrap();
        let a = reprojection_error_map(&up, &p).unwrap();
        let b = reprojection_error_map(&biased, &p).unwrap();
        // shifts depend only on the pair, so the bias passes straight through
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((y - (x - 5.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn evaluate_fr_agrees_with_standalone_functions() {
        let p = pair(14, 4);
        let fused = smooth(&random_raster(128, 128, 4, 15), 1.2);
        let ev = evaluate_fr(&fused, &p, &FrConfig::default()).unwrap();
        let rep = &ev.report;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(rep.get(names::R_Q2N).unwrap(), r_index(&fused, &p, RMetric::Q2n).unwrap()));
        assert!(close(rep.get(names::R_SAM).unwrap(), r_index(&fused, &p, RMetric::Sam).unwrap()));
        assert!(close(rep.get(names::R_ERGAS).unwrap(), r_index(&fused, &p, RMetric::Ergas).unwrap()));
        assert!(close(rep.get(names::D_LAMBDA_K).unwrap(), d_lambda_khan(&fused, &p).unwrap()));
        assert!(close(rep.get(names::D_LAMBDA_K_TILDE).unwrap(), d_lambda_khan_tilde(&fused, &p).unwrap()));
        assert!(close(rep.get(names::D_LAMBDA).unwrap(), d_lambda(p.ms(), &fused, 1).unwrap()));
        assert!(close(rep.get(names::D_S).unwrap(), d_s(&fused, &p, 1).unwrap()));
        assert!(close(rep.get(names::D_RHO).unwrap(), d_rho(&fused, p.pan(), 4).unwrap()));
        assert_eq!(
            rep.get(names::R_Q2N).unwrap() + rep.get(names::D_LAMBDA_K_ALIGN).unwrap(),
            1.0
        );
        assert_eq!(ev.error_map, reprojection_error_map(&fused, &p).unwrap());
        rep.validate().unwrap();
    }
}
