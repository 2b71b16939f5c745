use std::path::Path;

use anyhow::Context;
use occkit_core::synth::SynthConfig;
use occkit_core::RayPattern;
use serde::Deserialize;

/// Defaults read from `--config`. Every key is optional; flags override them.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub pattern: Option<RayPattern>,
    pub dilate: Option<f64>,
    pub hard_fraction: Option<f64>,
    pub thresholds: Option<Vec<f64>>,
    pub foreground: Option<Vec<u8>>,
    pub mave_threshold: Option<f64>,
    pub pooled: Option<bool>,
    pub n_bins: Option<usize>,
    pub fmin: Option<f64>,
    pub fmax: Option<f64>,
    pub shared_bins: Option<bool>,
    pub dt: Option<f64>,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    /// Partial scene description; missing keys take the generator defaults.
    pub synth: Option<SynthConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag value, else config value, else the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
