//! Versioned filter constants shipped in `config/filters.json`.

use std::sync::OnceLock;

use serde::Deserialize;

const FILTERS_JSON: &str = include_str!("../config/filters.json");

#[derive(Debug, Clone, Deserialize)]
pub struct FilterConfig {
    pub version: u32,
    pub interpolator: InterpolatorTable,
    pub mtf_defaults: MtfDefaults,
}

#[derive(Debug, Clone, Deserialize)]
pub struct InterpolatorTable {
    pub name: String,
    pub center: f64,
    pub odd_taps: Vec<f64>,
}

impl InterpolatorTable {
    /// Full symmetric tap vector, centre at index `odd_taps.len() * 2 - 1`.
    pub fn full_taps(&self) -> Vec<f64> {
        let half = 2 * self.odd_taps.len() - 1;
        let mut taps = vec![0.0; 2 * half + 1];
        taps[half] = self.center;
        for (m, &h) in self.odd_taps.iter().enumerate() {
            let d = 2 * m + 1;
            taps[half + d] = h;
            taps[half - d] = h;
        }
        taps
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct MtfDefaults {
    pub ms_nyquist_gain: f64,
    pub pan_nyquist_gain: f64,
    pub kernel_size_per_ratio: usize,
}

impl MtfDefaults {
    /// Default odd kernel size for a ratio (41 for ratio 4).
    pub fn kernel_size(&self, ratio: usize) -> usize {
        self.kernel_size_per_ratio * ratio + 1
    }
}

pub fn filters() -> &'static FilterConfig {
    static CONFIG: OnceLock<FilterConfig> = OnceLock::new();
    CONFIG.get_or_init(|| serde_json::from_str(FILTERS_JSON).expect("bundled filters.json is valid"))
}
