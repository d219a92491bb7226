//! Multiband raster container, sensor metadata and PAN/MS pairing.
//!
//! Samples are stored band-sequentially (all of band 0, then band 1, ...) as
//! `f64` regardless of the storage type they were loaded from.

mod io;

pub use io::{
    load_raster, load_raster_with_sidecar, read_sidecar, save_raster, save_raster_with_sensor,
    Dtype, Sidecar,
};

use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{Error, Result};

/// Dynamic range assumed when a sidecar does not declare one (11-bit data).
pub const DEFAULT_DYNAMIC_RANGE: f64 = 2047.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<f64>,
    dynamic_range: f64,
}

impl Raster {
    pub fn new(
        rows: usize,
        cols: usize,
        bands: usize,
        data: Vec<f64>,
        dynamic_range: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::geometry(format!(
                "raster dimensions must be positive, got {rows}x{cols}x{bands}"
            )));
        }
        if data.len() != rows * cols * bands {
            return Err(Error::geometry(format!(
                "data length {} does not match {rows}x{cols}x{bands}",
                data.len()
            )));
        }
        if !(dynamic_range.is_finite() && dynamic_range > 0.0) {
            return Err(Error::param(format!(
                "dynamic range must be positive, got {dynamic_range}"
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            rows,
            cols,
            bands,
            data,
            dynamic_range,
        })
    }

    /// Builds a raster from one buffer per band.
    pub fn from_bands(
        rows: usize,
        cols: usize,
        bands: Vec<Vec<f64>>,
        dynamic_range: f64,
    ) -> Result<Self> {
        let n = bands.len();
        if let Some(b) = bands.iter().position(|b| b.len() != rows * cols) {
            return Err(Error::geometry(format!(
                "band {b} has {} samples, expected {}",
                bands[b].len(),
                rows * cols
            )));
        }
        Self::new(rows, cols, n, bands.concat(), dynamic_range)
    }

    pub fn filled(rows: usize, cols: usize, bands: usize, value: f64) -> Result<Self> {
        Self::new(
            rows,
            cols,
            bands,
            vec![value; rows * cols * bands],
            DEFAULT_DYNAMIC_RANGE,
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Pixels per band.
    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn dynamic_range(&self) -> f64 {
        self.dynamic_range
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.plane_len())
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[(band * self.rows + row) * self.cols + col]
    }

    /// Copy of a single band as a one-band raster.
    pub fn band_raster(&self, b: usize) -> Raster {
        Raster {
            rows: self.rows,
            cols: self.cols,
            bands: 1,
            data: self.band(b).to_vec(),
            dynamic_range: self.dynamic_range,
        }
    }

    pub fn with_dynamic_range(mut self, dynamic_range: f64) -> Result<Self> {
        if !(dynamic_range.is_finite() && dynamic_range > 0.0) {
            return Err(Error::param(format!(
                "dynamic range must be positive, got {dynamic_range}"
            )));
        }
        self.dynamic_range = dynamic_range;
        Ok(self)
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.bands == other.bands
    }

    pub(crate) fn ensure_same_shape(&self, other: &Raster, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::geometry(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.rows, self.cols, self.bands, other.rows, other.cols, other.bands
            )))
        }
    }

    /// Builds a raster of the same geometry from per-band buffers, keeping the
    /// dynamic range. Buffers come from internal pipelines and are trusted to
    /// be finite.
    pub(crate) fn from_planes(rows: usize, cols: usize, planes: Vec<Vec<f64>>, dr: f64) -> Raster {
        debug_assert!(planes.iter().all(|p| p.len() == rows * cols));
        Raster {
            rows,
            cols,
            bands: planes.len(),
            data: planes.concat(),
            dynamic_range: dr,
        }
    }

    /// Applies `f` sample-wise, keeping geometry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Raster> {
        Raster::new(
            self.rows,
            self.cols,
            self.bands,
            self.data.iter().map(|&v| f(v)).collect(),
            self.dynamic_range,
        )
    }

    /// Stacks rasters of identical spatial size along the band axis.
    pub fn stack(parts: &[&Raster]) -> Result<Raster> {
        let first = parts
            .first()
            .ok_or_else(|| Error::param("cannot stack zero rasters"))?;
        let mut data = Vec::new();
        let mut bands = 0;
        for p in parts {
            if p.rows != first.rows || p.cols != first.cols {
                return Err(Error::geometry("stacked rasters differ in size"));
            }
            data.extend_from_slice(&p.data);
            bands += p.bands;
        }
        Raster::new(first.rows, first.cols, bands, data, first.dynamic_range)
    }
}

/// Resolution ratio and MTF Nyquist gains of a PAN/MS sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    pub ratio: usize,
    pub ms_nyquist_gains: Vec<f64>,
    pub pan_nyquist_gain: f64,
}

impl SensorSpec {
    pub fn new(
        name: impl Into<String>,
        ratio: usize,
        ms_nyquist_gains: Vec<f64>,
        pan_nyquist_gain: f64,
    ) -> Result<Self> {
        let s = Self {
            name: name.into(),
            ratio,
            ms_nyquist_gains,
            pan_nyquist_gain,
        };
        s.validate()?;
        Ok(s)
    }

    /// Sensor with the conventional default gains for `bands` MS channels.
    pub fn with_default_gains(name: impl Into<String>, ratio: usize, bands: usize) -> Result<Self> {
        let defaults = &config::filters().mtf_defaults;
        Self::new(
            name,
            ratio,
            vec![defaults.ms_nyquist_gain; bands],
            defaults.pan_nyquist_gain,
        )
    }

    /// Named presets. WorldView-2 and WorldView-3 share ratio 4 and the
    /// default gains; only the name differs.
    pub fn preset(name: &str, bands: usize) -> Result<Self> {
        match name {
            "wv2" | "wv3" => Self::with_default_gains(name, 4, bands),
            other => Err(Error::param(format!("unknown sensor preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratio < 2 {
            return Err(Error::param(format!(
                "resolution ratio must be >= 2, got {}",
                self.ratio
            )));
        }
        let in_unit = |g: f64| g > 0.0 && g < 1.0;
        if let Some(g) = self.ms_nyquist_gains.iter().find(|g| !in_unit(**g)) {
            return Err(Error::param(format!("MS Nyquist gain {g} outside (0,1)")));
        }
        if !in_unit(self.pan_nyquist_gain) {
            return Err(Error::param(format!(
                "PAN Nyquist gain {} outside (0,1)",
                self.pan_nyquist_gain
            )));
        }
        Ok(())
    }
}

/// A PAN image together with its MS counterpart at `1/ratio` resolution.
#[derive(Debug, Clone)]
pub struct PanMsPair {
    pan: Raster,
    ms: Raster,
    sensor: SensorSpec,
}

impl PanMsPair {
    pub fn pan(&self) -> &Raster {
        &self.pan
    }

    pub fn ms(&self) -> &Raster {
        &self.ms
    }

    pub fn sensor(&self) -> &SensorSpec {
        &self.sensor
    }

    pub fn ratio(&self) -> usize {
        self.sensor.ratio
    }

    pub fn into_parts(self) -> (Raster, Raster, SensorSpec) {
        (self.pan, self.ms, self.sensor)
    }

    /// Checks that `fused` lives on the PAN grid with one band per MS band.
    pub fn check_fused(&self, fused: &Raster) -> Result<()> {
        if fused.rows() != self.pan.rows()
            || fused.cols() != self.pan.cols()
            || fused.bands() != self.ms.bands()
        {
            return Err(Error::geometry(format!(
                "fused image is {}x{}x{}, expected {}x{}x{}",
                fused.rows(),
                fused.cols(),
                fused.bands(),
                self.pan.rows(),
                self.pan.cols(),
                self.ms.bands()
            )));
        }
        Ok(())
    }
}

pub fn validate_pair(pan: Raster, ms: Raster, sensor: SensorSpec) -> Result<PanMsPair> {
    sensor.validate()?;
    if pan.bands() != 1 {
        return Err(Error::geometry(format!(
            "PAN must have exactly one band, found {}",
            pan.bands()
        )));
    }
    let r = sensor.ratio;
    if pan.rows() != r * ms.rows() || pan.cols() != r * ms.cols() {
        return Err(Error::geometry(format!(
            "PAN {}x{} is not {r} x MS {}x{}",
            pan.rows(),
            pan.cols(),
            ms.rows(),
            ms.cols()
        )));
    }
    if sensor.ms_nyquist_gains.len() != ms.bands() {
        return Err(Error::geometry(format!(
            "sensor declares {} MS gains for {} bands",
            sensor.ms_nyquist_gains.len(),
            ms.bands()
        )));
    }
    Ok(PanMsPair { pan, ms, sensor })
}

/// Per-band integer decimation offsets `(dr, dc)`, each in `0..ratio`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftMap {
    offsets: Vec<(usize, usize)>,
}

impl ShiftMap {
    pub fn new(offsets: Vec<(usize, usize)>, ratio: usize) -> Result<Self> {
        if let Some((b, o)) = offsets
            .iter()
            .enumerate()
            .find(|(_, (dr, dc))| *dr >= ratio || *dc >= ratio)
        {
            return Err(Error::param(format!(
                "offset {o:?} of band {b} outside 0..{ratio}"
            )));
        }
        Ok(Self { offsets })
    }

    pub fn zeros(bands: usize) -> Self {
        Self {
            offsets: vec![(0, 0); bands],
        }
    }

    /// The same offset for every band.
    pub fn uniform(bands: usize, offset: (usize, usize), ratio: usize) -> Result<Self> {
        Self::new(vec![offset; bands], ratio)
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.offsets.iter().all(|&o| o == (0, 0))
    }
}
