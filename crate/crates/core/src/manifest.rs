//! Dataset manifest: one JSON file listing samples and their per-class PNGs.
//!
//! Relative paths resolve against the manifest's directory, so a corpus can
//! be moved as a whole.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{self, Image, ProbabilityMap, RasterError, SegmentationMap};
use crate::synth::DegradationSpec;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported manifest version {0}")]
    Version(u32),
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample {sample_id:?}: {message}")]
    Sample { sample_id: String, message: String },
    #[error("sample {sample_id:?}: referenced file does not exist: {path}")]
    MissingFile { sample_id: String, path: String },
    #[error("sample {sample_id:?}: {source}")]
    Raster {
        sample_id: String,
        #[source]
        source: RasterError,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelmapRef {
    pub path: String,
    pub num_classes: usize,
}

/// Generator bookkeeping carried along with synthetic samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_dice: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degradation: Option<DegradationSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub sample_id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labelmap: Option<LabelmapRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<SampleMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub samples: Vec<ManifestSample>,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(samples: Vec<ManifestSample>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            samples,
            base_dir: PathBuf::new(),
        }
    }

    /// Parses and validates a manifest file, including file existence.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Read {
            path: label.clone(),
            source,
        })?;
        let mut manifest: Manifest = serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
            path: label,
            message: e.to_string(),
        })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.version != MANIFEST_VERSION {
            return Err(ManifestError::Version(self.version));
        }
        let mut ids = HashSet::new();
        for s in &self.samples {
            if !ids.insert(s.sample_id.as_str()) {
                return Err(ManifestError::DuplicateId(s.sample_id.clone()));
            }
            let err = |message: String| ManifestError::Sample {
                sample_id: s.sample_id.clone(),
                message,
            };
            let classes = match (&s.prediction, &s.labelmap) {
                (Some(p), None) if !p.is_empty() => p.len(),
                (None, Some(l)) if l.num_classes > 0 => l.num_classes,
                (Some(_), Some(_)) => return Err(err("give either `prediction` or `labelmap`, not both".into())),
                _ => return Err(err("missing prediction (non-empty `prediction` or `labelmap`)".into())),
            };
            if let Some(t) = &s.truth {
                if t.len() != classes {
                    return Err(err(format!("{} truth channels for {classes} prediction classes", t.len())));
                }
            }
            if matches!(&s.probability, Some(p) if p.is_empty()) {
                return Err(err("empty `probability` list".into()));
            }
            for rel in self.sample_files(s) {
                if !self.resolve(rel).is_file() {
                    return Err(ManifestError::MissingFile {
                        sample_id: s.sample_id.clone(),
                        path: self.resolve(rel).display().to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    fn sample_files<'a>(&self, s: &'a ManifestSample) -> Vec<&'a str> {
        let mut files = vec![s.image.as_str()];
        files.extend(s.prediction.iter().flatten().map(String::as_str));
        files.extend(s.labelmap.iter().map(|l| l.path.as_str()));
        files.extend(s.probability.iter().flatten().map(String::as_str));
        files.extend(s.truth.iter().flatten().map(String::as_str));
        files
    }

    fn raster_err(s: &ManifestSample) -> impl Fn(RasterError) -> ManifestError + '_ {
        move |source| ManifestError::Raster {
            sample_id: s.sample_id.clone(),
            source,
        }
    }

    pub fn load_image(&self, s: &ManifestSample) -> Result<Image, ManifestError> {
        raster::load_image(self.resolve(&s.image)).map_err(Self::raster_err(s))
    }

    pub fn load_prediction(&self, s: &ManifestSample) -> Result<SegmentationMap, ManifestError> {
        let map = match (&s.prediction, &s.labelmap) {
            (Some(paths), _) => {
                let paths: Vec<PathBuf> = paths.iter().map(|p| self.resolve(p)).collect();
                raster::load_segmentation(&paths)
            }
            (None, Some(l)) => raster::import_labelmap(self.resolve(&l.path), l.num_classes),
            (None, None) => {
                return Err(ManifestError::Sample {
                    sample_id: s.sample_id.clone(),
                    message: "missing prediction".into(),
                })
            }
        };
        map.map_err(Self::raster_err(s))
    }

    pub fn load_probability(&self, s: &ManifestSample) -> Result<Option<ProbabilityMap>, ManifestError> {
        s.probability
            .as_ref()
            .map(|paths| {
                let paths: Vec<PathBuf> = paths.iter().map(|p| self.resolve(p)).collect();
                raster::load_probability(&paths).map_err(Self::raster_err(s))
            })
            .transpose()
    }

    pub fn load_truth(&self, s: &ManifestSample) -> Result<Option<SegmentationMap>, ManifestError> {
        s.truth
            .as_ref()
            .map(|paths| {
                let paths: Vec<PathBuf> = paths.iter().map(|p| self.resolve(p)).collect();
                raster::load_segmentation(&paths).map_err(Self::raster_err(s))
            })
            .transpose()
    }
}
