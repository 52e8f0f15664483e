//! On-disk schemas of the `score` and `evaluate` outputs.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sqa_core::evaluation::EvaluationReport;
use sqa_core::scoring::ObjectScore;

use crate::config::Provenance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub sqa_score: f64,
    pub num_objects: usize,
    pub no_objects: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_baseline: Option<f64>,
    #[serde(default)]
    pub objects: Vec<ObjectScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample_id: String,
    /// `input` or `backend`.
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoresFile {
    pub config: Provenance,
    pub records: Vec<ScoreRecord>,
    #[serde(default)]
    pub errors: Vec<SampleError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config: Provenance,
    pub report: EvaluationReport,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

impl ScoresFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading scores {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing scores {}", path.display()))
    }
}
