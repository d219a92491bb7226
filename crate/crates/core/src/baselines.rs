//! Reference pansharpening methods used to populate benchmark tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{convolve, default_mtf_kernel, interpolate_upscale};
use crate::raster::{PanMsPair, Raster, ShiftMap};
use crate::resampling::decimate;
use crate::DEGENERACY_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exp,
    Brovey,
    MtfGlp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Exp, Method::Brovey, Method::MtfGlp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Exp => "exp",
            Method::Brovey => "brovey",
            Method::MtfGlp => "mtf-glp",
        }
    }

    pub fn run(self, pair: &PanMsPair) -> Result<Raster> {
        match self {
            Method::Exp => exp_baseline(pair),
            Method::Brovey => brovey(pair),
            Method::MtfGlp => mtf_glp(pair),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param(format!("unknown method '{s}' (expected exp, brovey or mtf-glp)")))
    }
}

/// Plain interpolation of the MS to the PAN grid.
pub fn exp_baseline(pair: &PanMsPair) -> Result<Raster> {
    interpolate_upscale(pair.ms(), pair.ratio())
}

/// Brovey transform: each interpolated band scaled by `PAN / I`, with `I` the
/// band mean. Pixels with `I == 0` keep the interpolated values.
pub fn brovey(pair: &PanMsPair) -> Result<Raster> {
    let up = exp_baseline(pair)?;
    let n = up.plane_len();
    let b = up.bands() as f64;
    let mut intensity = vec![0.0; n];
    for band in up.band_iter() {
        intensity.iter_mut().zip(band).for_each(|(i, v)| *i += v);
    }
    let gain: Vec<f64> = intensity
        .iter()
        .zip(pair.pan().band(0))
        .map(|(&i, &p)| if i == 0.0 { 1.0 } else { p * b / i })
        .collect();
    let data = up
        .band_iter()
        .flat_map(|band| band.iter().zip(&gain).map(|(v, g)| v * g))
        .collect();
    Raster::new(up.rows(), up.cols(), up.bands(), data, up.dynamic_range())
}

/// MTF-matched generalized Laplacian pyramid with regression injection gains.
/// The PAN low-pass for band `b` uses that band's MS Nyquist gain.
pub fn mtf_glp(pair: &PanMsPair) -> Result<Raster> {
    let r = pair.ratio();
    let pan = pair.pan();
    let up = exp_baseline(pair)?;
    let floor = DEGENERACY_EPS * pan.dynamic_range() * pan.dynamic_range();
    let n = pan.plane_len() as f64;

    let mut lowpass: Vec<(f64, Raster)> = Vec::new();
    let mut data = Vec::with_capacity(up.data().len());
    for (band, &gain) in up.band_iter().zip(&pair.sensor().ms_nyquist_gains) {
        if !lowpass.iter().any(|(g, _)| *g == gain) {
            let lp = convolve(pan, &[default_mtf_kernel(gain, r)?])?;
            lowpass.push((gain, interpolate_upscale(&decimate(&lp, r, &ShiftMap::zeros(1))?, r)?));
        }
        let low = lowpass.iter().find(|(g, _)| *g == gain).map(|(_, l)| l.band(0)).unwrap();
        let ml = low.iter().sum::<f64>() / n;
        let var_l = low.iter().map(|v| (v - ml).powi(2)).sum::<f64>() / n;
        let g = if var_l < floor {
            0.0
        } else {
            let mb = band.iter().sum::<f64>() / n;
            band.iter().zip(low).map(|(b, l)| (b - mb) * (l - ml)).sum::<f64>() / n / var_l
        };
        data.extend(
            band.iter()
                .zip(pan.band(0))
                .zip(low)
                .map(|((b, p), l)| b + g * (p - l)),
        );
    }
    Raster::new(up.rows(), up.cols(), up.bands(), data, up.dynamic_range())
}
