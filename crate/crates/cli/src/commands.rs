use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{error, info, warn};
use rayon::prelude::*;
use sqa_core::backend::{self, PromptableSegmenter};
use sqa_core::evaluation::{replacement_analysis, true_dice, EvaluationReport, ReplacementInput, SampleRow};
use sqa_core::manifest::{Manifest, ManifestSample};
use sqa_core::objects::{BoxPrompt, PointPrompt};
use sqa_core::raster::Image;
use sqa_core::scoring::{confidence_baseline, score_sample, ScoreError};
use sqa_core::synth::{build_corpus, DegradationSpec, SceneSpec};

use crate::config::RunConfig;
use crate::scores::{to_json, ReportFile, SampleError, ScoreRecord, ScoresFile};
use crate::Failure;

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(Failure::Input)?;
    }
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Input)
}

enum SampleFailure {
    Input(String),
    Backend(String),
}

fn score_one(
    manifest: &Manifest,
    sample: &ManifestSample,
    backend: &dyn PromptableSegmenter,
    config: &RunConfig,
) -> Result<ScoreRecord, SampleFailure> {
    let input = |e: sqa_core::manifest::ManifestError| SampleFailure::Input(e.to_string());
    let image = manifest.load_image(sample).map_err(input)?;
    let prediction = manifest.load_prediction(sample).map_err(input)?;
    let probability = manifest.load_probability(sample).map_err(input)?;
    let score = score_sample(&sample.sample_id, &image, &prediction, backend, &config.scoring()).map_err(|e| match e {
        ScoreError::Backend { .. } => SampleFailure::Backend(e.to_string()),
        ScoreError::DimensionMismatch { .. } => SampleFailure::Input(e.to_string()),
    })?;
    Ok(ScoreRecord {
        sample_id: score.sample_id,
        sqa_score: score.s,
        num_objects: score.num_objects,
        no_objects: score.no_objects,
        confidence_baseline: probability.as_ref().map(confidence_baseline),
        objects: score.object_scores,
    })
}

/// Scores every manifest sample and writes the scores file. Records keep
/// manifest order regardless of worker count.
pub fn cmd_score(manifest_path: &Path, config: &RunConfig) -> Result<ScoresFile, Failure> {
    config.validate().map_err(Failure::Input)?;
    let manifest = Manifest::load(manifest_path).map_err(|e| Failure::Input(e.into()))?;
    let output = config
        .output
        .clone()
        .ok_or_else(|| Failure::Input(anyhow!("no output path given")))?;
    let backend = config.backend.build().map_err(|e| Failure::Input(e.into()))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Failure::Input(e.into()))?;
    let results: Vec<Result<ScoreRecord, SampleFailure>> = pool.install(|| {
        manifest
            .samples
            .par_iter()
            .map(|s| score_one(&manifest, s, backend.as_ref(), config))
            .collect()
    });

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (sample, result) in manifest.samples.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(f) => {
                let (kind, message) = match f {
                    SampleFailure::Input(m) => ("input", m),
                    SampleFailure::Backend(m) => ("backend", m),
                };
                error!("{}: {kind} error: {message}", sample.sample_id);
                errors.push(SampleError {
                    sample_id: sample.sample_id.clone(),
                    kind: kind.to_string(),
                    message,
                });
            }
        }
    }

    let file = ScoresFile {
        config: config.provenance(),
        records,
        errors,
    };
    write_file(&output, &to_json(&file))?;
    info!("wrote {} records to {}", file.records.len(), output.display());

    if file.errors.iter().any(|e| e.kind == "input") {
        return Err(Failure::Input(anyhow!("{} sample(s) failed on input", file.errors.len())));
    }
    if !file.errors.is_empty() {
        return Err(Failure::Backend(anyhow!(
            "{} sample(s) failed on the backend",
            file.errors.len()
        )));
    }
    Ok(file)
}

pub struct EvaluateArgs<'a> {
    pub manifest: &'a Path,
    pub scores: &'a Path,
    pub k_list: &'a [f64],
    /// Output prefix; `.json` and `.txt` are appended.
    pub output: &'a Path,
    pub replacement: bool,
    pub workers: usize,
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Compares scores with true Dice and writes `{output}.json` / `{output}.txt`.
pub fn cmd_evaluate(args: &EvaluateArgs<'_>) -> Result<ReportFile, Failure> {
    if let Some(k) = args.k_list.iter().find(|k| !(**k > 0.0 && **k < 100.0)) {
        return Err(Failure::Input(anyhow!("k value {k} outside (0, 100)")));
    }
    let manifest = Manifest::load(args.manifest).map_err(|e| Failure::Input(e.into()))?;
    let scores = ScoresFile::load(args.scores).map_err(Failure::Input)?;
    let by_id: HashMap<&str, &ManifestSample> =
        manifest.samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();

    let mut unknown = Vec::new();
    let mut missing_truth = Vec::new();
    for r in &scores.records {
        match by_id.get(r.sample_id.as_str()) {
            None => unknown.push(r.sample_id.clone()),
            Some(s) if s.truth.is_none() => missing_truth.push(r.sample_id.clone()),
            Some(_) => {}
        }
    }
    if !unknown.is_empty() {
        return Err(Failure::Input(anyhow!("scored samples not in manifest: {}", unknown.join(", "))));
    }
    if !missing_truth.is_empty() {
        return Err(Failure::Input(anyhow!(
            "missing ground truth for: {}",
            missing_truth.join(", ")
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.max(1))
        .build()
        .map_err(|e| Failure::Input(e.into()))?;
    let rows: Vec<anyhow::Result<SampleRow>> = pool.install(|| {
        scores
            .records
            .par_iter()
            .map(|r| {
                let s = by_id[r.sample_id.as_str()];
                let pred = manifest.load_prediction(s)?;
                let truth = manifest.load_truth(s)?.expect("checked above");
                let td = true_dice(&pred, &truth).with_context(|| format!("sample {}", s.sample_id))?;
                let mut flags = Vec::new();
                if r.no_objects {
                    flags.push("no_objects".to_string());
                }
                Ok(SampleRow {
                    sample_id: r.sample_id.clone(),
                    sqa: r.sqa_score,
                    confidence_baseline: r.confidence_baseline,
                    true_dice: td,
                    flags,
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>().map_err(Failure::Input)?;
    let mut report = EvaluationReport::build(rows, args.k_list).map_err(|e| Failure::Input(e.into()))?;

    if args.replacement {
        let backend = scores.config.backend.build().map_err(|e| Failure::Input(e.into()))?;
        let inputs = scores
            .records
            .iter()
            .map(|r| {
                let s = by_id[r.sample_id.as_str()];
                Ok(ReplacementInput {
                    sample_id: s.sample_id.clone(),
                    image: manifest.load_image(s)?,
                    prediction: manifest.load_prediction(s)?,
                    truth: manifest.load_truth(s)?.expect("checked above"),
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()
            .map_err(Failure::Input)?;
        let summary = replacement_analysis(&inputs, backend.as_ref(), &scores.config.scoring());
        if !summary.failed.is_empty() {
            warn!("replacement analysis: {} sample(s) failed", summary.failed.len());
        }
        report.replacement = Some(summary);
    }

    let file = ReportFile {
        config: scores.config.clone(),
        report,
    };
    write_file(&with_extension(args.output, ".json"), &to_json(&file))?;
    write_file(&with_extension(args.output, ".txt"), &file.report.render_text())?;

    if file.report.has_errors() {
        return Err(Failure::Input(anyhow!(
            "report contains undefined statistics; see {}",
            with_extension(args.output, ".txt").display()
        )));
    }
    Ok(file)
}

/// Generates a synthetic corpus with manifest under `out`.
pub fn cmd_synth(
    scene: &SceneSpec,
    degradations: &[DegradationSpec],
    n: usize,
    out: &Path,
) -> Result<Manifest, Failure> {
    build_corpus(n, scene, degradations, out).map_err(|e| Failure::Input(e.into()))
}

#[derive(Debug)]
pub struct CheckLine {
    pub prompt: &'static str,
    pub latency_ms: f64,
    pub area: usize,
}

/// Fixture for `backend-check`: a 4x4 image, dark left half, bright right half.
pub fn check_fixture() -> Image {
    let px = (0..16u32).map(|i| if i % 4 < 2 { 30 } else { 220 }).collect();
    Image::gray(4, 4, px).expect("valid fixture")
}

/// Sends one point and one box prompt and checks the answers' dimensions.
pub fn cmd_backend_check(config: &RunConfig) -> Result<Vec<CheckLine>, Failure> {
    config.backend.validate().map_err(|e| Failure::Input(e.into()))?;
    let backend = config.backend.build().map_err(|e| Failure::Input(e.into()))?;
    let image = check_fixture();
    let object = sqa_core::raster::BinaryMask::from_fn(4, 4, |x, _| x >= 2);
    let ctx = Some(backend::QueryContext {
        sample_id: "backend-check",
        class_index: 1,
        object_index: 1,
        mask: &object,
    });
    let point = PointPrompt { x: 3, y: 1 };
    let bbox = BoxPrompt {
        x_min: 0,
        y_min: 0,
        x_max: 3,
        y_max: 3,
    };
    let mut lines = Vec::new();
    let point_result = backend::segment_point(backend.as_ref(), &image, point, ctx)
        .map_err(|e| Failure::Backend(anyhow!("point prompt: {e}")))?;
    lines.push(CheckLine {
        prompt: "point",
        latency_ms: point_result.latency_ms,
        area: point_result.mask.area(),
    });
    let box_result = backend::segment_box(backend.as_ref(), &image, bbox, ctx)
        .map_err(|e| Failure::Backend(anyhow!("box prompt: {e}")))?;
    lines.push(CheckLine {
        prompt: "box",
        latency_ms: box_result.latency_ms,
        area: box_result.mask.area(),
    });
    Ok(lines)
}
