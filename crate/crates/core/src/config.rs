//! Single JSON configuration carrying every tunable of the pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::concept_graph::{IngestOptions, IntermediateOptions};
use crate::condenser::TrainConfig;
use crate::error::{Error, Result};
use crate::harness::{validate_bounds, DEFAULT_BUCKETS};
use crate::informativeness::ClassifierConfig;

pub const CONFIG_ENV: &str = "RELCHAIN_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Neighbors taken from each word-vector table.
    pub neighbors_k: usize,
    /// Links are added when informativeness is strictly above this.
    pub threshold: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            neighbors_k: 250,
            threshold: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Hybrid routing threshold on confidence.
    pub tau: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tau: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub buckets: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            buckets: DEFAULT_BUCKETS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub ingest: IngestOptions,
    pub classifier: ClassifierConfig,
    pub links: LinkConfig,
    pub intermediates: IntermediateOptions,
    pub condenser: TrainConfig,
    pub solver: SolverConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads from `explicit`, else from `$RELCHAIN_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(from_env) {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_bounds(&self.eval.buckets)?;
        self.condenser.validate()?;
        if !(0.0..=1.0).contains(&self.links.threshold) {
            return Err(Error::InvalidInput("links.threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
