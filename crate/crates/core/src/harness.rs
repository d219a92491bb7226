//! Benchmark campaigns over tile datasets: full-resolution runs, reduced-
//! resolution cross-checks against ground truth, misregistration deltas and
//! index correlation matrices.
//!
//! A dataset is a directory with one subdirectory per tile, each holding a
//! `pan` and an `ms` raster. The sensor comes from the MS sidecar when
//! present, otherwise default gains at the PAN/MS size ratio are assumed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::alignment::global_corrcoef;
use crate::baselines::Method;
use crate::error::{Error, Result};
use crate::fr_indexes::{evaluate_fr, FrConfig};
use crate::raster::{load_raster_with_sidecar, save_raster_with_sensor, validate_pair, Dtype, PanMsPair, Raster, SensorSpec};
use crate::ref_indexes::{ergas, q2n_detailed, sam_detailed, AngleUnit};
use crate::report::{names, polarity, Polarity, ScoreReport};
use crate::resampling::wald_downgrade;
use crate::synthetic::add_band_noise;

/// Name of the ground-truth pseudo-method in reduced-resolution campaigns.
pub const GT: &str = "gt";

pub fn load_tile(dir: &Path) -> Result<PanMsPair> {
    let (pan, _) = load_raster_with_sidecar(&dir.join("pan"))?;
    let (ms, side) = load_raster_with_sidecar(&dir.join("ms"))?;
    let sensor = match side.sensor {
        Some(s) => s,
        None => {
            if ms.rows() == 0 || pan.rows() % ms.rows() != 0 {
                return Err(Error::geometry(format!(
                    "PAN rows {} not a multiple of MS rows {}",
                    pan.rows(),
                    ms.rows()
                )));
            }
            SensorSpec::with_default_gains("default", pan.rows() / ms.rows(), ms.bands())?
        }
    };
    validate_pair(pan, ms, sensor)
}

pub fn save_tile(dir: &Path, pair: &PanMsPair, dtype: Dtype) -> Result<()> {
    save_raster_with_sensor(pair.pan(), &dir.join("pan"), dtype, Some(pair.sensor()))?;
    save_raster_with_sensor(pair.ms(), &dir.join("ms"), dtype, Some(pair.sensor()))
}

/// Tiles of a dataset directory in name order. Unreadable tiles are skipped
/// and reported in the second element.
pub fn load_dataset(dir: &Path) -> Result<(Vec<(String, PanMsPair)>, Vec<String>)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(dir, e))?;
        if e.path().is_dir() {
            names.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let mut tiles = Vec::new();
    let mut warnings = Vec::new();
    for name in names {
        match load_tile(&dir.join(&name)) {
            Ok(p) => tiles.push((name, p)),
            Err(e) => warnings.push(format!("skipping tile {name}: {e}")),
        }
    }
    if tiles.is_empty() {
        return Err(Error::Dataset(format!("no readable tiles in {}", dir.display())));
    }
    Ok((tiles, warnings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub tile: String,
    pub method: String,
    pub index: String,
    pub value: f64,
    /// Windows, blocks or pixels left out of the index average.
    pub excluded: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignResult {
    pub rows: Vec<CampaignRow>,
    pub warnings: Vec<String>,
}

impl CampaignResult {
    fn push_report(&mut self, rep: &ScoreReport) {
        for (index, &value) in &rep.scores {
            self.rows.push(CampaignRow {
                tile: rep.tile.clone(),
                method: rep.method.clone(),
                index: index.clone(),
                value,
                excluded: rep.diagnostics.excluded_windows.get(index).copied().unwrap_or(0),
            });
        }
    }

    pub fn methods(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.method.clone()).collect()
    }

    pub fn indexes(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.index.clone()).collect()
    }

    pub fn tiles(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.tile.clone()).collect()
    }

    /// Per-tile values of one method and index, in row order.
    pub fn column(&self, method: &str, index: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.index == index)
            .map(|r| r.value)
            .collect()
    }

    pub fn value(&self, tile: &str, method: &str, index: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.tile == tile && r.method == method && r.index == index)
            .map(|r| r.value)
    }

    /// Mean over tiles for every `(method, index)`.
    pub fn averages(&self) -> BTreeMap<(String, String), f64> {
        let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry((r.method.clone(), r.index.clone())).or_default();
            e.0 += r.value;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// Every `(tile, method)` carries the same index set and all values are finite.
    pub fn validate(&self) -> Result<()> {
        let mut sets: BTreeMap<(&str, &str), BTreeSet<&str>> = BTreeMap::new();
        for r in &self.rows {
            if !r.value.is_finite() {
                return Err(Error::Degenerate(format!(
                    "{} / {} / {} is not finite",
                    r.tile, r.method, r.index
                )));
            }
            sets.entry((&r.tile, &r.method)).or_default().insert(&r.index);
        }
        let mut it = sets.values();
        if let Some(first) = it.next() {
            if it.any(|s| s != first) {
                return Err(Error::Dataset("rows carry different index sets".into()));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tile,method,index,value,excluded\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{:?},{}", r.tile, r.method, r.index, r.value, r.excluded);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Full-resolution campaign over in-memory tiles.
pub fn run_fr_campaign_on(tiles: &[(String, PanMsPair)], methods: &[Method], cfg: &FrConfig) -> Result<CampaignResult> {
    if tiles.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let reports: Vec<Vec<ScoreReport>> = tiles
        .par_iter()
        .map(|(name, pair)| {
            methods
                .iter()
                .map(|m| {
                    let fused = m.run(pair)?;
                    let mut rep = evaluate_fr(&fused, pair, cfg)?.report;
                    rep.tile = name.clone();
                    rep.method = m.name().to_string();
                    Ok(rep)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = CampaignResult::default();
    reports.iter().flatten().for_each(|r| out.push_report(r));
    Ok(out)
}

pub fn run_fr_campaign(dataset: &Path, methods: &[Method], cfg: &FrConfig) -> Result<CampaignResult> {
    let (tiles, warnings) = load_dataset(dataset)?;
    let mut res = run_fr_campaign_on(&tiles, methods, cfg)?;
    res.warnings = warnings;
    Ok(res)
}

#[derive(Debug, Clone)]
pub struct RrOptions {
    pub misalign: Option<(usize, usize)>,
    pub include_gt: bool,
    /// Extra pseudo-methods: ground truth plus Gaussian noise at these
    /// fractions of each band's standard deviation.
    pub noise_levels: Vec<f64>,
    pub fr: FrConfig,
}

impl Default for RrOptions {
    fn default() -> Self {
        Self {
            misalign: None,
            include_gt: true,
            noise_levels: Vec::new(),
            fr: FrConfig::default(),
        }
    }
}

pub fn noisy_gt_name(level: f64) -> String {
    format!("gt-noise-{level}")
}

fn tile_seed(name: &str, k: usize) -> u64 {
    // FNV-1a, stable across platforms and runs
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes().chain((k as u64).to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Reference indexes of `fused` against `gt` plus the full no-reference suite.
fn score_rr(tile: &str, method: &str, fused: &Raster, gt: &Raster, reduced: &PanMsPair, cfg: &FrConfig) -> Result<ScoreReport> {
    let mut rep = evaluate_fr(fused, reduced, cfg)?.report;
    rep.tile = tile.to_string();
    rep.method = method.to_string();
    let sam = sam_detailed(gt, fused, AngleUnit::Degrees)?;
    rep.insert(names::SAM, sam.value);
    rep.diagnostics.excluded_windows.insert(names::SAM.into(), sam.excluded);
    rep.insert(names::ERGAS, ergas(gt, fused, reduced.ratio())?);
    let q = q2n_detailed(gt, fused, cfg.block)?;
    rep.insert(names::Q2N, q.value);
    rep.diagnostics.excluded_windows.insert(names::Q2N.into(), q.excluded);
    Ok(rep)
}

/// Reduced-resolution campaign: every tile is Wald-degraded, the methods run
/// on the reduced pair and are scored against the original MS.
pub fn run_rr_campaign_on(tiles: &[(String, PanMsPair)], methods: &[Method], opts: &RrOptions) -> Result<CampaignResult> {
    if tiles.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let reports: Vec<Vec<ScoreReport>> = tiles
        .par_iter()
        .map(|(name, pair)| {
            let (reduced, gt) = wald_downgrade(pair, opts.misalign)?;
            let mut out = Vec::new();
            if opts.include_gt {
                out.push(score_rr(name, GT, &gt, &gt, &reduced, &opts.fr)?);
            }
            for (k, &level) in opts.noise_levels.iter().enumerate() {
                let noisy = add_band_noise(&gt, level, tile_seed(name, k))?;
                out.push(score_rr(name, &noisy_gt_name(level), &noisy, &gt, &reduced, &opts.fr)?);
            }
            for m in methods {
                let fused = m.run(&reduced)?;
                out.push(score_rr(name, m.name(), &fused, &gt, &reduced, &opts.fr)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut out = CampaignResult::default();
    reports.iter().flatten().for_each(|r| out.push_report(r));
    Ok(out)
}

pub fn run_rr_campaign(dataset: &Path, methods: &[Method], opts: &RrOptions) -> Result<CampaignResult> {
    let (tiles, warnings) = load_dataset(dataset)?;
    let mut res = run_rr_campaign_on(&tiles, methods, opts)?;
    res.warnings = warnings;
    Ok(res)
}

/// Sample exclusion applied before correlating index columns.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OutlierPolicy {
    #[default]
    None,
    /// Drop a sample when any index has modified z-score above the threshold.
    ModifiedZ(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Row-major `labels.len()` squared.
    pub values: Vec<f64>,
    pub samples: usize,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[i * self.labels.len() + j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        let n = self.labels.len();
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(l);
            for v in &self.values[i * n..(i + 1) * n] {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn outlier_flags(col: &[f64], threshold: f64) -> Vec<bool> {
    let med = median(&mut col.to_vec());
    let mad = median(&mut col.iter().map(|v| (v - med).abs()).collect::<Vec<_>>());
    if mad == 0.0 {
        return vec![false; col.len()];
    }
    col.iter().map(|v| (0.6745 * (v - med) / mad).abs() > threshold).collect()
}

/// Pearson correlation between index columns over `(tile, method)` samples.
/// Distortion indexes are complemented (`1 - x`) first so that larger means
/// better for every column.
pub fn index_correlation_matrix(result: &CampaignResult, exclude_gt: bool, policy: OutlierPolicy) -> Result<CorrelationMatrix> {
    let labels: Vec<String> = result.indexes().into_iter().collect();
    let mut samples: BTreeMap<(&str, &str), BTreeMap<&str, f64>> = BTreeMap::new();
    for r in &result.rows {
        if exclude_gt && r.method == GT {
            continue;
        }
        samples.entry((&r.tile, &r.method)).or_default().insert(&r.index, r.value);
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for vals in samples.values() {
        if vals.len() != labels.len() {
            return Err(Error::Dataset("samples carry different index sets".into()));
        }
        for (c, l) in cols.iter_mut().zip(&labels) {
            let v = vals[l.as_str()];
            c.push(match polarity(l) {
                Polarity::Quality => v,
                Polarity::Distortion => 1.0 - v,
            });
        }
    }
    if let OutlierPolicy::ModifiedZ(t) = policy {
        let mut drop = vec![false; cols.first().map_or(0, Vec::len)];
        for c in &cols {
            for (d, f) in drop.iter_mut().zip(outlier_flags(c, t)) {
                *d |= f;
            }
        }
        for c in &mut cols {
            let mut k = 0;
            c.retain(|_| {
                k += 1;
                !drop[k - 1]
            });
        }
    }
    let n = cols.first().map_or(0, Vec::len);
    if n < 3 {
        return Err(Error::InsufficientSamples(format!("{n} samples, need at least 3")));
    }
    let m = labels.len();
    let mut values = vec![0.0; m * m];
    for i in 0..m {
        values[i * m + i] = 1.0;
        for j in i + 1..m {
            let r = global_corrcoef(&cols[i], &cols[j])
                .map_err(|e| Error::Degenerate(format!("{} vs {}: {e}", labels[i], labels[j])))?;
            values[i * m + j] = r;
            values[j * m + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels,
        values,
        samples: n,
    })
}

/// `mean(misaligned) - mean(aligned)` per method and index.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable {
    pub deltas: BTreeMap<(String, String), f64>,
}

impl DeltaTable {
    pub fn get(&self, method: &str, index: &str) -> Option<f64> {
        self.deltas.get(&(method.to_string(), index.to_string())).copied()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,index,delta\n");
        for ((m, i), d) in &self.deltas {
            let _ = writeln!(s, "{m},{i},{d:?}");
        }
        s
    }
}

pub fn misregistration_delta(aligned: &CampaignResult, misaligned: &CampaignResult) -> Result<DeltaTable> {
    if aligned.methods() != misaligned.methods() || aligned.indexes() != misaligned.indexes() {
        return Err(Error::Dataset("campaigns cover different methods or indexes".into()));
    }
    let a = aligned.averages();
    let b = misaligned.averages();
    let deltas = a
        .iter()
        .map(|(k, va)| {
            b.get(k)
                .map(|vb| (k.clone(), vb - va))
                .ok_or_else(|| Error::Dataset(format!("{} / {} missing", k.0, k.1)))
        })
        .collect::<Result<_>>()?;
    Ok(DeltaTable { deltas })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tile: &str, method: &str, index: &str, value: f64) -> CampaignRow {
        CampaignRow {
            tile: tile.into(),
            method: method.into(),
            index: index.into(),
            value,
            excluded: 0,
        }
    }

    fn table(cols: &[(&str, Vec<f64>)], method: &str) -> CampaignResult {
        let mut rows = Vec::new();
        for (k, _) in cols[0].1.iter().enumerate() {
            for (index, vals) in cols {
                rows.push(row(&format!("t{k:02}"), method, index, vals[k]));
            }
        }
        CampaignResult { rows, warnings: vec![] }
    }

    #[test]
    fn identical_columns_correlate_to_one() {
        let a = vec![0.1, 0.5, 0.3, 0.9, 0.7];
        let res = table(&[("Q2n", a.clone()), ("R-Q2n", a.clone())], "m");
        let c = index_correlation_matrix(&res, true, OutlierPolicy::None).unwrap();
        assert_eq!(c.get("Q2n", "R-Q2n"), Some(1.0));
        assert_eq!(c.get("Q2n", "Q2n"), Some(1.0));
    }

    #[test]
    fn negated_column_and_polarity() {
        let a = vec![0.1, 0.5, 0.3, 0.9, 0.7];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let res = table(&[("Q2n", a.clone()), ("R-Q2n", neg)], "m");
        let c = index_correlation_matrix(&res, true, OutlierPolicy::None).unwrap();
        assert!((c.get("Q2n", "R-Q2n").unwrap() + 1.0).abs() < 1e-12);
        // a distortion equal to the quality column flips sign after complementing
        let res = table(&[("Q2n", a.clone()), ("D_S", a)], "m");
        let c = index_correlation_matrix(&res, true, OutlierPolicy::None).unwrap();
        assert!((c.get("Q2n", "D_S").unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gt_exclusion_and_sample_count() {
        let mut res = table(&[("Q2n", vec![0.1, 0.4, 0.2]), ("SAM", vec![3.0, 1.0, 2.0])], "m");
        res.rows.extend(table(&[("Q2n", vec![1.0, 1.0, 1.0]), ("SAM", vec![0.0, 0.0, 0.0])], GT).rows);
        assert_eq!(index_correlation_matrix(&res, true, OutlierPolicy::None).unwrap().samples, 3);
        assert_eq!(index_correlation_matrix(&res, false, OutlierPolicy::None).unwrap().samples, 6);
        let small = table(&[("Q2n", vec![0.1, 0.4]), ("SAM", vec![3.0, 1.0])], "m");
        assert!(matches!(
            index_correlation_matrix(&small, true, OutlierPolicy::None),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn modified_z_drops_outliers() {
        let q = vec![0.5, 0.52, 0.48, 0.51, 0.49, 0.5, -5.0];
        let s = vec![1.0, 1.1, 0.9, 1.05, 0.95, 1.0, 1.0];
        let res = table(&[("Q2n", q), ("SAM", s)], "m");
        assert_eq!(index_correlation_matrix(&res, true, OutlierPolicy::None).unwrap().samples, 7);
        assert_eq!(index_correlation_matrix(&res, true, OutlierPolicy::ModifiedZ(3.5)).unwrap().samples, 6);
    }

    #[test]
    fn delta_of_identical_runs_is_zero() {
        let res = table(&[("Q2n", vec![0.1, 0.4, 0.2]), ("SAM", vec![3.0, 1.0, 2.0])], "m");
        let d = misregistration_delta(&res, &res).unwrap();
        assert!(d.deltas.values().all(|&v| v == 0.0));
        let other = table(&[("Q2n", vec![0.1, 0.4, 0.2])], "m");
        assert!(misregistration_delta(&res, &other).is_err());
    }

    #[test]
    fn averages_and_csv() {
        let res = table(&[("Q2n", vec![0.1, 0.4, 0.2])], "m");
        let avg = res.averages()[&("m".to_string(), "Q2n".to_string())];
        assert!((avg - 0.7 / 3.0).abs() < 1e-15);
        let csv = res.to_csv();
        assert!(csv.starts_with("tile,method,index,value,excluded\nt00,m,Q2n,0.1,0\n"));
        res.validate().unwrap();
        let mut bad = res.clone();
        bad.rows[0].value = f64::NAN;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tile_seeds_differ() {
        assert_ne!(tile_seed("a", 0), tile_seed("a", 1));
        assert_ne!(tile_seed("a", 0), tile_seed("b", 0));
    }
}
