//! Reference-based quality indexes: SAM, ERGAS, UIQI and Q2n.
//!
//! UIQI and Q2n are evaluated on non-overlapping square blocks anchored at
//! the top-left corner; incomplete blocks at the right/bottom borders are
//! dropped. A block is excluded when any of its three factor denominators
//! falls below `DEGENERACY_EPS * dynamic_range^2`; the image score is the
//! mean over the remaining blocks, in block raster order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercomplex::{BasisTable, Hypercomplex};
use crate::lanes;
use crate::raster::Raster;
use crate::DEGENERACY_EPS;

/// Default block size for UIQI and Q2n.
pub const DEFAULT_BLOCK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Radians,
    #[default]
    Degrees,
}

/// A mean over windows or pixels plus how many were left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averaged {
    pub value: f64,
    pub used: usize,
    pub excluded: usize,
}

fn check_pair(gt: &Raster, fused: &Raster) -> Result<()> {
    gt.ensure_same_shape(fused, "reference and fused images differ")
}

/// Spectral angle between two vectors, computed as
/// `2 atan2(|u - v|, |u + v|)` on the unit vectors for accuracy near zero.
fn spectral_angle(u: &[f64], v: &[f64]) -> Option<f64> {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let (mut d, mut s) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (a / nu, b / nv);
        d += (a - b) * (a - b);
        s += (a + b) * (a + b);
    }
    Some(2.0 * d.sqrt().atan2(s.sqrt()))
}

/// Mean spectral angle; pixels where either vector is zero are skipped.
pub fn sam_detailed(gt: &Raster, fused: &Raster, unit: AngleUnit) -> Result<Averaged> {
    check_pair(gt, fused)?;
    if gt.bands() < 2 {
        return Err(Error::param("SAM needs at least 2 bands"));
    }
    let (n, bands) = (gt.plane_len(), gt.bands());
    let mut u = vec![0.0; bands];
    let mut v = vec![0.0; bands];
    let (mut sum, mut used) = (0.0, 0usize);
    for p in 0..n {
        for b in 0..bands {
            u[b] = gt.data()[b * n + p];
            v[b] = fused.data()[b * n + p];
        }
        if let Some(a) = spectral_angle(&u, &v) {
            sum += a;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Degenerate("SAM: every pixel has a zero spectrum".into()));
    }
    let mean = sum / used as f64;
    Ok(Averaged {
        value: match unit {
            AngleUnit::Radians => mean,
            AngleUnit::Degrees => mean.to_degrees(),
        },
        used,
        excluded: n - used,
    })
}

pub fn sam(gt: &Raster, fused: &Raster, unit: AngleUnit) -> Result<f64> {
    sam_detailed(gt, fused, unit).map(|a| a.value)
}

/// `(100 / ratio) * sqrt(mean_b (RMSE_b / mean_b(gt))^2)`.
pub fn ergas(gt: &Raster, fused: &Raster, ratio: usize) -> Result<f64> {
    check_pair(gt, fused)?;
    if ratio == 0 {
        return Err(Error::param("ERGAS ratio must be positive"));
    }
    let n = gt.plane_len() as f64;
    let mut acc = 0.0;
    for b in 0..gt.bands() {
        let (g, f) = (gt.band(b), fused.band(b));
        let mean = g.iter().sum::<f64>() / n;
        if mean == 0.0 {
            return Err(Error::Degenerate(format!("ERGAS: band {b} of the reference has zero mean")));
        }
        let mse = g.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        acc += mse / (mean * mean);
    }
    Ok(100.0 / ratio as f64 * (acc / gt.bands() as f64).sqrt())
}

fn block_grid(rows: usize, cols: usize, block: usize) -> Result<(usize, usize)> {
    if block == 0 || block > rows.min(cols) {
        return Err(Error::param(format!(
            "block size {block} does not fit a {rows}x{cols} image"
        )));
    }
    Ok((rows / block, cols / block))
}

/// UIQI of one block given its moments; `None` when degenerate.
#[inline]
fn uiqi_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, floor: f64) -> Option<f64> {
    let sxsy = vx.sqrt() * vy.sqrt();
    let contrast_den = vx + vy;
    let lum_den = mx * mx + my * my;
    if sxsy < floor || contrast_den < floor || lum_den < floor {
        return None;
    }
    Some(((cxy / sxsy) * (2.0 * sxsy / contrast_den) * (2.0 * mx * my / lum_den)).clamp(-1.0, 1.0))
}

/// Per-block means and variances of one plane, with the pixels of every
/// complete block stored contiguously and centred on the block mean.
pub(crate) struct BlockMoments {
    npx: usize,
    means: Vec<f64>,
    vars: Vec<f64>,
    centred: Vec<f64>,
}

impl BlockMoments {
    pub(crate) fn new(x: &[f64], rows: usize, cols: usize, block: usize) -> Result<Self> {
        let (br, bc) = block_grid(rows, cols, block)?;
        let npx = block * block;
        let mut means = Vec::with_capacity(br * bc);
        let mut vars = Vec::with_capacity(br * bc);
        let mut centred = Vec::with_capacity(br * bc * npx);
        for bi in 0..br {
            for bj in 0..bc {
                let start = centred.len();
                for r in bi * block..(bi + 1) * block {
                    centred.extend_from_slice(&x[r * cols + bj * block..][..block]);
                }
                let px = &mut centred[start..];
                let mean = lanes::sum(px) / npx as f64;
                px.iter_mut().for_each(|v| *v -= mean);
                means.push(mean);
                vars.push(lanes::dot(px, px) / npx as f64);
            }
        }
        Ok(Self {
            npx,
            means,
            vars,
            centred,
        })
    }

    fn block(&self, k: usize) -> &[f64] {
        &self.centred[k * self.npx..(k + 1) * self.npx]
    }
}

/// Block-averaged UIQI for several plane pairs sharing one block grid. Blocks
/// are the outer loop so every block's pixels stay in cache across pairs.
pub(crate) fn uiqi_moments_many(pairs: &[(&BlockMoments, &BlockMoments)], dynamic_range: f64) -> Result<Vec<Averaged>> {
    let Some(first) = pairs.first() else {
        return Ok(Vec::new());
    };
    let floor = DEGENERACY_EPS * dynamic_range * dynamic_range;
    let total = first.0.means.len();
    let npx = first.0.npx as f64;
    let per_block: Vec<Vec<Option<f64>>> = (0..total)
        .into_par_iter()
        .map(|k| {
            pairs
                .iter()
                .map(|(x, y)| {
                    let cxy = lanes::dot(x.block(k), y.block(k)) / npx;
                    uiqi_from_moments(x.means[k], y.means[k], x.vars[k], y.vars[k], cxy, floor)
                })
                .collect()
        })
        .collect();
    (0..pairs.len())
        .map(|p| {
            let (mut sum, mut used) = (0.0, 0usize);
            for q in per_block.iter().filter_map(|b| b[p]) {
                sum += q;
                used += 1;
            }
            if used == 0 {
                return Err(Error::Degenerate(format!("all {total} UIQI blocks excluded")));
            }
            Ok(Averaged {
                value: sum / used as f64,
                used,
                excluded: total - used,
            })
        })
        .collect()
}

pub(crate) fn uiqi_moments(x: &BlockMoments, y: &BlockMoments, dynamic_range: f64) -> Result<Averaged> {
    Ok(uiqi_moments_many(&[(x, y)], dynamic_range)?.remove(0))
}

/// Block-averaged UIQI of two `rows x cols` planes.
pub(crate) fn uiqi_plane(
    x: &[f64],
    y: &[f64],
    rows: usize,
    cols: usize,
    block: usize,
    dynamic_range: f64,
) -> Result<Averaged> {
    let mx = BlockMoments::new(x, rows, cols, block)?;
    let my = BlockMoments::new(y, rows, cols, block)?;
    uiqi_moments(&mx, &my, dynamic_range)
}

fn single_band(r: &Raster, what: &str) -> Result<()> {
    if r.bands() != 1 {
        return Err(Error::geometry(format!(
            "{what} must be single-band, has {} bands",
            r.bands()
        )));
    }
    Ok(())
}

pub fn uiqi_detailed(x: &Raster, y: &Raster, block: usize) -> Result<Averaged> {
    single_band(x, "UIQI input")?;
    check_pair(x, y)?;
    uiqi_plane(x.data(), y.data(), x.rows(), x.cols(), block, x.dynamic_range())
}

/// Universal image quality index of two single-band images.
pub fn uiqi(x: &Raster, y: &Raster, block: usize) -> Result<f64> {
    uiqi_detailed(x, y, block).map(|a| a.value)
}

/// First and second order statistics of a block of hypercomplex pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    pub mu_z: Hypercomplex,
    pub mu_zhat: Hypercomplex,
    pub sigma_z: f64,
    pub sigma_zhat: f64,
    /// `mean((z - mu_z) * conj(zhat - mu_zhat))`
    pub sigma_zzhat: Hypercomplex,
}

impl BlockStats {
    /// Product of the correlation, contrast and mean-bias factors, or `None`
    /// when a denominator is below `floor`.
    pub fn quality(&self, floor: f64) -> Option<f64> {
        let sz = self.sigma_z * self.sigma_zhat;
        let contrast_den = self.sigma_z * self.sigma_z + self.sigma_zhat * self.sigma_zhat;
        let (nz, nzh) = (self.mu_z.norm(), self.mu_zhat.norm());
        let lum_den = nz * nz + nzh * nzh;
        if sz < floor || contrast_den < floor || lum_den < floor {
            return None;
        }
        Some(((self.sigma_zzhat.norm() / sz) * (2.0 * sz / contrast_den) * (2.0 * nz * nzh / lum_den)).min(1.0))
    }
}

/// Statistics of one block; `gt` and `fused` hold the block's pixels band-sequentially.
fn block_stats(
    gt: &Raster,
    fused: &Raster,
    r0: usize,
    c0: usize,
    block: usize,
    table: &BasisTable,
) -> BlockStats {
    let bands = gt.bands();
    let dim = table.dim();
    let npx = (block * block) as f64;
    let cols = gt.cols();
    let mean_of = |r: &Raster, b: usize| {
        let plane = r.band(b);
        (r0..r0 + block)
            .map(|i| plane[i * cols + c0..i * cols + c0 + block].iter().sum::<f64>())
            .sum::<f64>()
            / npx
    };
    let mu_g: Vec<f64> = (0..bands).map(|b| mean_of(gt, b)).collect();
    let mu_f: Vec<f64> = (0..bands).map(|b| mean_of(fused, b)).collect();

    // cross[i][j] = mean((g_i - mu_g_i)(f_j - mu_f_j)), plus per-band variances
    let mut cross = vec![0.0; bands * bands];
    let mut var_g = 0.0;
    let mut var_f = 0.0;
    let mut dg = vec![0.0; bands];
    let mut df = vec![0.0; bands];
    for i in r0..r0 + block {
        for j in c0..c0 + block {
            let p = i * cols + j;
            for b in 0..bands {
                dg[b] = gt.band(b)[p] - mu_g[b];
                df[b] = fused.band(b)[p] - mu_f[b];
                var_g += dg[b] * dg[b];
                var_f += df[b] * df[b];
            }
            for (a, &g) in dg.iter().enumerate() {
                let row = &mut cross[a * bands..(a + 1) * bands];
                for (c, &f) in row.iter_mut().zip(&df) {
                    *c += g * f;
                }
            }
        }
    }
    let mut cov = vec![0.0; dim];
    for a in 0..bands {
        for b in 0..bands {
            cov[a ^ b] += table.sign_conj(a, b) * cross[a * bands + b] / npx;
        }
    }
    BlockStats {
        mu_z: Hypercomplex::embed(&pad(&mu_g, dim)),
        mu_zhat: Hypercomplex::embed(&pad(&mu_f, dim)),
        sigma_z: (var_g / npx).sqrt(),
        sigma_zhat: (var_f / npx).sqrt(),
        sigma_zzhat: Hypercomplex::embed(&cov),
    }
}

fn pad(v: &[f64], dim: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(dim, 0.0);
    out
}

/// Block statistics for every complete block, in raster order.
pub fn q2n_block_stats(gt: &Raster, fused: &Raster, block: usize) -> Result<Vec<BlockStats>> {
    check_pair(gt, fused)?;
    let (br, bc) = block_grid(gt.rows(), gt.cols(), block)?;
    let table = BasisTable::new(gt.bands().next_power_of_two());
    Ok((0..br * bc)
        .into_par_iter()
        .map(|k| block_stats(gt, fused, (k / bc) * block, (k % bc) * block, block, &table))
        .collect())
}

pub fn q2n_detailed(gt: &Raster, fused: &Raster, block: usize) -> Result<Averaged> {
    let stats = q2n_block_stats(gt, fused, block)?;
    let floor = DEGENERACY_EPS * gt.dynamic_range() * gt.dynamic_range();
    let (mut sum, mut used) = (0.0, 0usize);
    for s in &stats {
        if let Some(q) = s.quality(floor) {
            sum += q;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Degenerate(format!("all {} Q2n blocks excluded", stats.len())));
    }
    Ok(Averaged {
        value: sum / used as f64,
        used,
        excluded: stats.len() - used,
    })
}

/// Hypercomplex multiband extension of UIQI; 1 iff the images coincide.
pub fn q2n(gt: &Raster, fused: &Raster, block: usize) -> Result<f64> {
    q2n_detailed(gt, fused, block).map(|a| a.value)
}
