use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index names used in reports and campaign tables.
pub mod names {
    pub const R_SAM: &str = "R-SAM";
    pub const R_ERGAS: &str = "R-ERGAS";
    pub const R_Q2N: &str = "R-Q2n";
    pub const D_LAMBDA_K_ALIGN: &str = "D_lambda_K_align";
    pub const D_LAMBDA: &str = "D_lambda";
    pub const D_LAMBDA_K: &str = "D_lambda_K";
    pub const D_LAMBDA_K_TILDE: &str = "D_lambda_K_tilde";
    pub const D_S: &str = "D_S";
    pub const D_RHO: &str = "D_rho";
    pub const SAM: &str = "SAM";
    pub const ERGAS: &str = "ERGAS";
    pub const Q2N: &str = "Q2n";

    /// Indexes produced by a full-resolution evaluation, in report order.
    pub const FULL_RESOLUTION: [&str; 9] = [
        R_SAM,
        R_ERGAS,
        R_Q2N,
        D_LAMBDA_K_ALIGN,
        D_LAMBDA,
        D_LAMBDA_K,
        D_LAMBDA_K_TILDE,
        D_S,
        D_RHO,
    ];

    pub const REFERENCE: [&str; 3] = [SAM, ERGAS, Q2N];
}

/// Whether larger values of an index mean better or worse quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Quality,
    Distortion,
}

pub fn polarity(index: &str) -> Polarity {
    match index {
        names::Q2N | names::R_Q2N => Polarity::Quality,
        _ => Polarity::Distortion,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Estimated `(dr, dc)` decimation offsets per band.
    pub shifts: Vec<[usize; 2]>,
    /// Winning correlation per band; `None` for degenerate bands.
    pub peak_correlations: Vec<Option<f64>>,
    pub degenerate_bands: Vec<usize>,
    /// Windows, blocks or pixels left out of each index's average.
    pub excluded_windows: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub tile: String,
    pub method: String,
    pub scores: BTreeMap<String, f64>,
    pub diagnostics: Diagnostics,
}

impl ScoreReport {
    pub fn new(tile: impl Into<String>, method: impl Into<String>) -> Self {
        Self {
            tile: tile.into(),
            method: method.into(),
            ..Default::default()
        }
    }

    pub fn get(&self, index: &str) -> Option<f64> {
        self.scores.get(index).copied()
    }

    pub fn insert(&mut self, index: &str, value: f64) {
        self.scores.insert(index.to_string(), value);
    }

    /// Every value finite, distortions non-negative, Q-type values in `[-1, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (k, &v) in &self.scores {
            if !v.is_finite() {
                return Err(Error::Degenerate(format!("{k} is not finite")));
            }
            let ok = match polarity(k) {
                Polarity::Quality => (-1.0..=1.0).contains(&v),
                Polarity::Distortion => v >= 0.0,
            };
            if !ok {
                return Err(Error::Degenerate(format!("{k} = {v} outside its range")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("score report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_ranges() {
        let mut r = ScoreReport::new("t", "m");
        r.insert(names::R_Q2N, 0.9);
        r.insert(names::D_RHO, 0.2);
        assert!(r.validate().is_ok());
        r.insert(names::D_S, -0.1);
        assert!(r.validate().is_err());
        let mut r = ScoreReport::new("t", "m");
        r.insert(names::Q2N, 1.5);
        assert!(r.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let mut r = ScoreReport::new("tile0", "exp");
        r.insert(names::D_LAMBDA, 0.0);
        r.diagnostics.shifts = vec![[0, 1]];
        r.diagnostics.peak_correlations = vec![None];
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["tile"], "tile0");
        assert_eq!(v["scores"]["D_lambda"], 0.0);
        assert_eq!(v["diagnostics"]["shifts"][0][1], 1);
        assert!(v["diagnostics"]["peak_correlations"][0].is_null());
    }
}
