//! How well quality scores track true segmentation quality.
//!
//! Scores are paired with true Dice per sample, then summarized by linear
//! (Pearson) and rank (Spearman) correlation and by how many of the worst
//! `k%` samples the scores single out. The replacement analysis checks
//! whether swapping a prediction for the segmenter's box-prompt masks helps.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{replace_prediction, PromptableSegmenter};
use crate::objects::extract_objects;
use crate::raster::{Image, SegmentationMap};
use crate::scoring::{dice, ScoringConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("non-finite value for sample {0:?}")]
    NonFinite(String),
    #[error("k = {0} outside (0, 100)")]
    InvalidK(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedEntry {
    pub sample_id: String,
    pub sqa_score: f64,
    pub true_dice: f64,
}

impl PairedEntry {
    pub fn new(sample_id: impl Into<String>, sqa_score: f64, true_dice: f64) -> Self {
        Self {
            sample_id: sample_id.into(),
            sqa_score,
            true_dice,
        }
    }
}

/// Score/quality pairs held in ascending `sample_id` order, so every
/// statistic is independent of input order.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSeries {
    entries: Vec<PairedEntry>,
}

impl PairedSeries {
    pub fn new(mut entries: Vec<PairedEntry>) -> Result<Self, EvalError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.sample_id.as_str()) {
                return Err(EvalError::DuplicateId(e.sample_id.clone()));
            }
            if !e.sqa_score.is_finite() || !e.true_dice.is_finite() {
                return Err(EvalError::NonFinite(e.sample_id.clone()));
            }
        }
        entries.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        Ok(Self { entries })
    }

    pub fn from_pairs(scores: &[f64], truths: &[f64]) -> Result<Self, EvalError> {
        assert_eq!(scores.len(), truths.len());
        let width = scores.len().to_string().len();
        Self::new(
            scores
                .iter()
                .zip(truths)
                .enumerate()
                .map(|(i, (&s, &t))| PairedEntry::new(format!("{i:0width$}"), s, t))
                .collect(),
        )
    }

    pub fn entries(&self) -> &[PairedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.sqa_score).collect()
    }

    pub fn truths(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.true_dice).collect()
    }
}

/// Macro-mean of per-class Dice over classes nonempty in either map.
/// Returns 1.0 when every class is empty in both.
pub fn true_dice(prediction: &SegmentationMap, truth: &SegmentationMap) -> Result<f64, EvalError> {
    if prediction.dims() != truth.dims() || prediction.num_classes() != truth.num_classes() {
        return Err(EvalError::ShapeMismatch(format!(
            "prediction {}x{}x{} vs truth {}x{}x{}",
            prediction.width(),
            prediction.height(),
            prediction.num_classes(),
            truth.width(),
            truth.height(),
            truth.num_classes()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (p, t) in prediction.channels().iter().zip(truth.channels()) {
        if p.is_empty() && t.is_empty() {
            continue;
        }
        total += dice(p, t);
        counted += 1;
    }
    Ok(if counted == 0 { 1.0 } else { total / counted as f64 })
}

/// Sample Pearson correlation of two equal-length slices.
pub fn pearson_values(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(x.len(), y.len(), "series lengths differ");
    let n = x.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, got: n });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(EvalError::UndefinedCorrelation("first variable is constant".into()));
    }
    if syy == 0.0 {
        return Err(EvalError::UndefinedCorrelation("second variable is constant".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

pub fn spearman_values(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    pearson_values(&fractional_ranks(x), &fractional_ranks(y))
}

/// Pearson correlation between quality scores and true Dice.
pub fn pearson(series: &PairedSeries) -> Result<f64, EvalError> {
    pearson_values(&series.scores(), &series.truths())
}

/// Spearman correlation (Pearson on average-tie ranks).
pub fn spearman(series: &PairedSeries) -> Result<f64, EvalError> {
    spearman_values(&series.scores(), &series.truths())
}

/// Number of samples flagged at `k` percent: `max(1, floor(n * k / 100))`.
pub fn bottom_k_count(n: usize, k: f64) -> usize {
    ((n as f64 * k / 100.0).floor() as usize).max(1)
}

/// Fraction of the `m` lowest-true-Dice samples that are also among the `m`
/// lowest-scored samples. Ties are broken by ascending sample id.
pub fn bottom_k_accuracy(series: &PairedSeries, k: f64) -> Result<f64, EvalError> {
    if !(k > 0.0 && k < 100.0) {
        return Err(EvalError::InvalidK(k));
    }
    let n = series.len();
    if n == 0 {
        return Err(EvalError::TooFewSamples { needed: 1, got: 0 });
    }
    let m = bottom_k_count(n, k);
    // Entries are already in id order, so a stable sort on value alone
    // applies the id tie-break.
    let lowest = |key: fn(&PairedEntry) -> f64| -> HashSet<&str> {
        let mut idx: Vec<&PairedEntry> = series.entries().iter().collect();
        idx.sort_by(|a, b| key(a).total_cmp(&key(b)));
        idx.into_iter().take(m).map(|e| e.sample_id.as_str()).collect()
    };
    let truth_set = lowest(|e| e.true_dice);
    let pred_set = lowest(|e| e.sqa_score);
    Ok(truth_set.intersection(&pred_set).count() as f64 / m as f64)
}

/// One sample for the replacement analysis.
#[derive(Clone, Debug)]
pub struct ReplacementInput {
    pub sample_id: String,
    pub image: Image,
    pub prediction: SegmentationMap,
    pub truth: SegmentationMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementOutcome {
    pub sample_id: String,
    pub original_dice: f64,
    pub replaced_dice: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_id: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplacementSummary {
    pub improved: usize,
    pub degraded: usize,
    pub unchanged: usize,
    pub failed: Vec<SampleFailure>,
    pub outcomes: Vec<ReplacementOutcome>,
}

/// Compares each prediction's true Dice with that of its backend replacement.
/// Failed samples are recorded and left out of the counts.
pub fn replacement_analysis(
    samples: &[ReplacementInput],
    backend: &dyn PromptableSegmenter,
    config: &ScoringConfig,
) -> ReplacementSummary {
    let mut out = ReplacementSummary::default();
    for s in samples {
        match replace_one(s, backend, config) {
            Ok(o) => {
                match o.replaced_dice.total_cmp(&o.original_dice) {
                    std::cmp::Ordering::Greater => out.improved += 1,
                    std::cmp::Ordering::Less => out.degraded += 1,
                    std::cmp::Ordering::Equal => out.unchanged += 1,
                }
                out.outcomes.push(o);
            }
            Err(message) => {
                log::warn!("replacement analysis skipped {}: {message}", s.sample_id);
                out.failed.push(SampleFailure {
                    sample_id: s.sample_id.clone(),
                    message,
                });
            }
        }
    }
    out
}

fn replace_one(
    s: &ReplacementInput,
    backend: &dyn PromptableSegmenter,
    config: &ScoringConfig,
) -> Result<ReplacementOutcome, String> {
    let original_dice = true_dice(&s.prediction, &s.truth).map_err(|e| e.to_string())?;
    let objects = extract_objects(&s.prediction, config.connectivity, config.min_area);
    let replaced = replace_prediction(backend, &s.sample_id, &s.image, s.prediction.num_classes(), &objects)
        .map_err(|e| e.to_string())?;
    let replaced_dice = true_dice(&replaced, &s.truth).map_err(|e| e.to_string())?;
    Ok(ReplacementOutcome {
        sample_id: s.sample_id.clone(),
        original_dice,
        replaced_dice,
    })
}

/// A statistic that may be undefined; the reason is kept for the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<Result<f64, EvalError>> for Stat {
    fn from(r: Result<f64, EvalError>) -> Self {
        match r {
            Ok(v) => Stat {
                value: Some(v),
                error: None,
            },
            Err(e) => Stat {
                value: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub k: f64,
    pub m: usize,
    pub accuracy: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub pearson: Stat,
    pub spearman: Stat,
    pub detection: Vec<Detection>,
}

impl MethodSummary {
    pub fn compute(method: &str, series: &PairedSeries, k_list: &[f64]) -> Self {
        Self {
            method: method.to_string(),
            pearson: pearson(series).into(),
            spearman: spearman(series).into(),
            detection: k_list
                .iter()
                .map(|&k| Detection {
                    k,
                    m: bottom_k_count(series.len(), k),
                    accuracy: bottom_k_accuracy(series, k).into(),
                })
                .collect(),
        }
    }

    pub fn has_errors(&self) -> bool {
        self.pearson.error.is_some()
            || self.spearman.error.is_some()
            || self.detection.iter().any(|d| d.accuracy.error.is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub sqa: f64,
    pub confidence_baseline: Option<f64>,
    pub true_dice: f64,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub methods: Vec<MethodSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replacement: Option<ReplacementSummary>,
    pub samples: Vec<SampleRow>,
}

pub const SQA_METHOD: &str = "sqa";
pub const BASELINE_METHOD: &str = "model_confidence";

impl EvaluationReport {
    /// Summarizes the quality score and, when every row carries one, the
    /// confidence baseline.
    pub fn build(rows: Vec<SampleRow>, k_list: &[f64]) -> Result<Self, EvalError> {
        let sqa = PairedSeries::new(
            rows.iter()
                .map(|r| PairedEntry::new(r.sample_id.clone(), r.sqa, r.true_dice))
                .collect(),
        )?;
        let mut methods = vec![MethodSummary::compute(SQA_METHOD, &sqa, k_list)];
        if !rows.is_empty() && rows.iter().all(|r| r.confidence_baseline.is_some()) {
            let baseline = PairedSeries::new(
                rows.iter()
                    .map(|r| {
                        PairedEntry::new(
                            r.sample_id.clone(),
                            r.confidence_baseline.expect("checked"),
                            r.true_dice,
                        )
                    })
                    .collect(),
            )?;
            methods.push(MethodSummary::compute(BASELINE_METHOD, &baseline, k_list));
        }
        Ok(Self {
            n: rows.len(),
            methods,
            replacement: None,
            samples: rows,
        })
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn has_errors(&self) -> bool {
        self.methods.iter().any(MethodSummary::has_errors)
    }

    /// Plain-text rendering: a summary table per method followed by the
    /// per-sample table.
    pub fn render_text(&self) -> String {
        let fmt = |s: &Stat| match (s.value, &s.error) {
            (Some(v), _) => format!("{v:.4}"),
            (None, Some(_)) => "undefined".to_string(),
            (None, None) => "-".to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "samples: {}", self.n);
        let _ = writeln!(out);

        let mut header = vec!["method".to_string(), "pearson".into(), "spearman".into()];
        let ks: Vec<f64> = self
            .methods
            .first()
            .map(|m| m.detection.iter().map(|d| d.k).collect())
            .unwrap_or_default();
        header.extend(ks.iter().map(|k| format!("bottom_{k}%")));
        let mut rows = vec![header];
        for m in &self.methods {
            let mut r = vec![m.method.clone(), fmt(&m.pearson), fmt(&m.spearman)];
            r.extend(m.detection.iter().map(|d| fmt(&d.accuracy)));
            rows.push(r);
        }
        write_table(&mut out, &rows);
        for m in &self.methods {
            for (what, s) in [("pearson", &m.pearson), ("spearman", &m.spearman)] {
                if let Some(e) = &s.error {
                    let _ = writeln!(out, "note: {} {what}: {e}", m.method);
                }
            }
        }

        if let Some(r) = &self.replacement {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "replacement: improved {} / degraded {} / unchanged {} / failed {}",
                r.improved,
                r.degraded,
                r.unchanged,
                r.failed.len()
            );
        }

        let _ = writeln!(out);
        let mut rows = vec![vec![
            "sample_id".to_string(),
            "sqa".into(),
            "confidence_baseline".into(),
            "true_dice".into(),
            "flags".into(),
        ]];
        for s in &self.samples {
            rows.push(vec![
                s.sample_id.clone(),
                format!("{:.6}", s.sqa),
                s.confidence_baseline
                    .map(|c| format!("{c:.6}"))
                    .unwrap_or_else(|| "-".into()),
                format!("{:.6}", s.true_dice),
                if s.flags.is_empty() {
                    "-".into()
                } else {
                    s.flags.join(",")
                },
            ]);
        }
        write_table(&mut out, &rows);
        out
    }
}

fn write_table(out: &mut String, rows: &[Vec<String>]) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<w$}", w = widths[c]))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
}
