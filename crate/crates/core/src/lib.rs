//! Quality assessment for pansharpened imagery.
//!
//! Reference-based indexes (SAM, ERGAS, UIQI, Q2n) and no-reference
//! full-resolution indexes: the reprojection family (R-SAM, R-ERGAS, R-Q2n),
//! Khan's spectral distortion and its variants, the QNR distortions, and the
//! local-correlation spatial index `D_rho`.

pub mod alignment;
pub mod baselines;
pub mod config;
pub mod error;
pub mod filtering;
pub mod fr_indexes;
pub mod harness;
pub mod hypercomplex;
mod lanes;
pub mod raster;
pub mod ref_indexes;
pub mod report;
pub mod resampling;
pub mod synthetic;

pub use error::{Error, Result};
pub use raster::{PanMsPair, Raster, SensorSpec, ShiftMap};

/// Relative degeneracy threshold: statistics below `DEGENERACY_EPS * dynamic_range^2`
/// are treated as zero.
pub const DEGENERACY_EPS: f64 = 1e-12;
