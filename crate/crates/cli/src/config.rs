use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sqa_core::backend::BackendConfig;
use sqa_core::objects::Connectivity;
use sqa_core::scoring::{Metric, ScoringConfig};

/// Environment variable overriding the remote backend endpoint.
pub const ENDPOINT_ENV: &str = "SQA_BACKEND_ENDPOINT";

pub const DEFAULT_K_LIST: [f64; 2] = [25.0, 50.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub backend: BackendConfig,
    /// 4 or 8.
    pub connectivity: u8,
    pub min_area: usize,
    pub metric: Metric,
    pub workers: usize,
    pub k_list: Vec<f64>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend: BackendConfig::default(),
            connectivity: 8,
            min_area: 1,
            metric: Metric::Dice,
            workers: 1,
            k_list: DEFAULT_K_LIST.to_vec(),
            output: None,
        }
    }
}

/// The result-affecting part of a [`RunConfig`], embedded in every output
/// file. Worker count and output location are left out so outputs do not
/// depend on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: BackendConfig,
    pub connectivity: u8,
    pub min_area: usize,
    pub metric: Metric,
    pub k_list: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if Connectivity::from_count(self.connectivity).is_none() {
            bail!("connectivity must be 4 or 8, got {}", self.connectivity);
        }
        if self.min_area == 0 {
            bail!("min_area must be at least 1");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if let Some(k) = self.k_list.iter().find(|k| !(**k > 0.0 && **k < 100.0)) {
            bail!("k_list value {k} outside (0, 100)");
        }
        self.backend.validate()?;
        Ok(())
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            connectivity: Connectivity::from_count(self.connectivity).unwrap_or_default(),
            min_area: self.min_area,
            metric: self.metric,
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            backend: self.backend.clone(),
            connectivity: self.connectivity,
            min_area: self.min_area,
            metric: self.metric,
            k_list: self.k_list.clone(),
        }
    }
}

impl Provenance {
    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            connectivity: Connectivity::from_count(self.connectivity).unwrap_or_default(),
            min_area: self.min_area,
            metric: self.metric,
        }
    }
}
