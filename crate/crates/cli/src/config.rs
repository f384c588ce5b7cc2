//! Optional JSON config file. Every key is optional; command-line flags win
//! over the file and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clarinet_core::{Criteria, Extractor, TempoSource};
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub extractor: Option<Extractor>,
    pub criteria: Option<Criteria>,
    pub process: Option<bool>,
    pub tempo_source: Option<TempoSource>,
    pub clip_seconds: Option<f64>,
    pub method: Option<String>,
    pub methods: Option<Vec<String>>,
    pub extractors: Option<Vec<Extractor>>,
    pub window_time: Option<f64>,
    pub stride_time: Option<f64>,
    pub stride_notes: Option<usize>,
    pub ms_weights: Option<PathBuf>,
    pub top: Option<usize>,
    pub jobs: Option<usize>,
    pub noise: Option<f64>,
    pub noise_seed: Option<u64>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}
