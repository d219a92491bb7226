//! Raw band-sequential payload plus JSON sidecar.
//!
//! A raster stored at `path` occupies two files: `<stem>.bsq` holding the
//! little-endian samples (band-major, then row-major) and `<stem>.json`
//! describing them. Either file name, or the bare stem, may be passed to
//! [`load_raster`] and [`save_raster`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Raster, SensorSpec, DEFAULT_DYNAMIC_RANGE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    U16,
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "u8",
            Dtype::U16 => "u16",
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl std::str::FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(Dtype::U8),
            "u16" => Ok(Dtype::U16),
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::param(format!("unsupported dtype '{other}'"))),
        }
    }
}

/// JSON header written next to every payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub dtype: Dtype,
    pub interleave: String,
    pub byte_order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamic_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorSpec>,
}

fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("bsq"))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let (header_path, _) = paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: header_path.clone(),
        msg: e.to_string(),
    })?;
    let bad = |msg: String| Error::Header {
        path: header_path.clone(),
        msg,
    };
    if header.interleave != "bsq" {
        return Err(bad(format!("unsupported interleave '{}'", header.interleave)));
    }
    if header.byte_order != "little" {
        return Err(bad(format!("unsupported byte order '{}'", header.byte_order)));
    }
    if header.rows == 0 || header.cols == 0 || header.bands == 0 {
        return Err(bad("rows, cols and bands must be positive".into()));
    }
    Ok(header)
}

/// Loads a raster and its sidecar, promoting samples to `f64`.
pub fn load_raster_with_sidecar(path: &Path) -> Result<(Raster, Sidecar)> {
    let header = read_sidecar(path)?;
    let (_, payload_path) = paths(path);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let n = header.rows * header.cols * header.bands;
    let expected = (n * header.dtype.size()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::PayloadSize {
            expected,
            found: bytes.len() as u64,
        });
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::U8 => bytes.iter().map(|&b| f64::from(b)).collect(),
        Dtype::U16 => bytes
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let raster = Raster::new(
        header.rows,
        header.cols,
        header.bands,
        data,
        header.dynamic_range.unwrap_or(DEFAULT_DYNAMIC_RANGE),
    )?;
    Ok((raster, header))
}

pub fn load_raster(path: &Path) -> Result<Raster> {
    load_raster_with_sidecar(path).map(|(r, _)| r)
}

pub fn save_raster(r: &Raster, path: &Path, dtype: Dtype) -> Result<()> {
    save_raster_with_sensor(r, path, dtype, None)
}

fn encode_int(v: f64, max: f64, dtype: Dtype) -> Result<f64> {
    let q = v.round();
    if !(0.0..=max).contains(&q) {
        return Err(Error::OutOfRange {
            value: v,
            dtype: dtype.name(),
        });
    }
    Ok(q)
}

/// Writes payload and sidecar; integer types are rounded to nearest and must
/// fit the type's range.
pub fn save_raster_with_sensor(
    r: &Raster,
    path: &Path,
    dtype: Dtype,
    sensor: Option<&SensorSpec>,
) -> Result<()> {
    let mut payload = Vec::with_capacity(r.data().len() * dtype.size());
    for &v in r.data() {
        match dtype {
            Dtype::U8 => payload.push(encode_int(v, u8::MAX as f64, dtype)? as u8),
            Dtype::U16 => payload
                .extend_from_slice(&(encode_int(v, u16::MAX as f64, dtype)? as u16).to_le_bytes()),
            Dtype::F32 => {
                let x = v as f32;
                if !x.is_finite() {
                    return Err(Error::OutOfRange {
                        value: v,
                        dtype: dtype.name(),
                    });
                }
                payload.extend_from_slice(&x.to_le_bytes());
            }
            Dtype::F64 => payload.extend_from_slice(&v.to_le_bytes()),
        }
    }
    let header = Sidecar {
        rows: r.rows(),
        cols: r.cols(),
        bands: r.bands(),
        dtype,
        interleave: "bsq".into(),
        byte_order: "little".into(),
        dynamic_range: Some(r.dynamic_range()),
        sensor: sensor.cloned(),
    };
    let (header_path, payload_path) = paths(path);
    if let Some(dir) = header_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(&header).expect("sidecar serializes");
    fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
    fs::write(&header_path, text + "\n").map_err(|e| Error::io(&header_path, e))?;
    Ok(())
}
