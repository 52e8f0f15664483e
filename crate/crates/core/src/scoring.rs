//! Agreement metrics and the sample-level quality score.
//!
//! Each object `m` gets `s = tau(m, point_mask) + tau(m, box_mask)` with
//! `tau` the Dice coefficient by default; the sample score is the flat mean
//! of object scores over all classes. Scores live in `[0, 2]` and are not
//! rescaled.
//!
//! The score is class-agnostic and only sees predicted objects: wrong class
//! labels and entirely missed objects are invisible to it. A prediction with
//! no objects scores `0` and is flagged `no_objects`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{self, BackendError, PromptableSegmenter, QueryContext};
use crate::objects::{extract_objects, BoxPrompt, Connectivity, PointPrompt};
use crate::raster::{BinaryMask, Image, ProbabilityMap, SegmentationMap};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("image is {image_w}x{image_h} but prediction is {pred_w}x{pred_h}")]
    DimensionMismatch {
        image_w: u32,
        image_h: u32,
        pred_w: u32,
        pred_h: u32,
    },
    #[error("backend failed on class {class_index} object {object_index}: {source}")]
    Backend {
        class_index: usize,
        object_index: usize,
        #[source]
        source: BackendError,
    },
}

/// `2|a ∩ b| / (|a| + |b|)`; two empty masks agree perfectly (1.0).
///
/// # Panics
/// If the masks differ in dimensions.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let inter = a.intersection_area(b);
    let total = a.area() + b.area();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

/// `|a ∩ b| / |a ∪ b|`; two empty masks agree perfectly (1.0).
///
/// # Panics
/// If the masks differ in dimensions.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Dice,
    Iou,
}

impl Metric {
    pub fn eval(self, a: &BinaryMask, b: &BinaryMask) -> f64 {
        match self {
            Metric::Dice => dice(a, b),
            Metric::Iou => iou(a, b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub connectivity: Connectivity,
    pub min_area: usize,
    pub metric: Metric,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Eight,
            min_area: 1,
            metric: Metric::Dice,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub class_index: usize,
    pub object_index: usize,
    pub area: usize,
    pub point: PointPrompt,
    #[serde(rename = "box")]
    pub bbox: BoxPrompt,
    /// Agreement with the point-prompt mask.
    pub point_agreement: f64,
    /// Agreement with the box-prompt mask.
    pub box_agreement: f64,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub s: f64,
    pub num_objects: usize,
    pub no_objects: bool,
    pub object_scores: Vec<ObjectScore>,
}

/// Flat mean of object scores. Values are summed in sorted order so the
/// result does not depend on object order.
pub fn aggregate(object_scores: &[f64]) -> f64 {
    if object_scores.is_empty() {
        return 0.0;
    }
    let mut sorted = object_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// Scores one prediction against the backend's answers to its object prompts.
///
/// Any backend failure aborts the sample; no partial score is produced.
pub fn score_sample(
    sample_id: &str,
    image: &Image,
    prediction: &SegmentationMap,
    backend: &dyn PromptableSegmenter,
    config: &ScoringConfig,
) -> Result<SampleScore, ScoreError> {
    if image.dims() != prediction.dims() {
        return Err(ScoreError::DimensionMismatch {
            image_w: image.width(),
            image_h: image.height(),
            pred_w: prediction.width(),
            pred_h: prediction.height(),
        });
    }

    let objects = extract_objects(prediction, config.connectivity, config.min_area);
    let mut object_scores = Vec::with_capacity(objects.len());
    for obj in &objects {
        let wrap = |source| ScoreError::Backend {
            class_index: obj.class_index,
            object_index: obj.object_index,
            source,
        };
        let ctx = Some(QueryContext::for_object(sample_id, obj));
        let pm = backend::segment_point(backend, image, obj.point, ctx).map_err(wrap)?;
        let bm = backend::segment_box(backend, image, obj.bbox, ctx).map_err(wrap)?;
        let point_agreement = config.metric.eval(&obj.mask, &pm.mask);
        let box_agreement = config.metric.eval(&obj.mask, &bm.mask);
        object_scores.push(ObjectScore {
            class_index: obj.class_index,
            object_index: obj.object_index,
            area: obj.area,
            point: obj.point,
            bbox: obj.bbox,
            point_agreement,
            box_agreement,
            s: point_agreement + box_agreement,
        });
    }

    let values: Vec<f64> = object_scores.iter().map(|o| o.s).collect();
    Ok(SampleScore {
        sample_id: sample_id.to_string(),
        s: aggregate(&values),
        num_objects: object_scores.len(),
        no_objects: object_scores.is_empty(),
        object_scores,
    })
}

/// Mean over pixels of the largest class probability.
pub fn confidence_baseline(probability: &ProbabilityMap) -> f64 {
    let n = probability.width() as usize * probability.height() as usize;
    let total: f64 = probability
        .pixel_iter()
        .map(|px| px.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{EchoBackend, EmptyBackend, PromptQuery};
    use proptest::prelude::*;

    fn from_rows(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        BinaryMask::from_fn(w, h, |x, y| rows[y as usize].as_bytes()[x as usize] == b'#')
    }

    #[test]
    fn dice_cases() {
        let a = from_rows(&["##..", "##.."]);
        assert_eq!(dice(&a, &a), 1.0);
        let b = from_rows(&["..##", "..##"]);
        assert_eq!(dice(&a, &b), 0.0);
        let c = from_rows(&[".##.", ".##."]);
        // |a|=4, |c|=4, |a∩c|=2
        assert_eq!(a.intersection_area(&c), 2);
        assert_eq!(dice(&a, &c), 0.5);
        let e = BinaryMask::empty(4, 2);
        assert_eq!(dice(&e, &e), 1.0);
        assert_eq!(dice(&a, &e), 0.0);
    }

    #[test]
    fn iou_cases() {
        let a = from_rows(&["##..", "##.."]);
        let c = from_rows(&[".##.", ".##."]);
        assert!((iou(&a, &c) - 2.0 / 6.0).abs() < 1e-15);
        let e = BinaryMask::empty(4, 2);
        assert_eq!(iou(&e, &e), 1.0);
    }

    #[test]
    #[should_panic(expected = "dimensions differ")]
    fn dice_dimension_mismatch_panics() {
        dice(&BinaryMask::empty(2, 2), &BinaryMask::empty(3, 2));
    }

    fn two_blob_prediction() -> SegmentationMap {
        SegmentationMap::new(vec![from_rows(&[
            "##....",
            "##....",
            "....##",
            "....##",
        ])])
        .unwrap()
    }

    #[test]
    fn echo_gives_two() {
        let img = Image::filled(6, 4, 0);
        let s = score_sample("a", &img, &two_blob_prediction(), &EchoBackend, &ScoringConfig::default()).unwrap();
        assert_eq!(s.s, 2.0);
        assert_eq!(s.num_objects, 2);
        assert!(!s.no_objects);
    }

    #[test]
    fn empty_prediction_sentinel() {
        let img = Image::filled(6, 4, 0);
        let pred = SegmentationMap::empty(6, 4, 2);
        let s = score_sample("a", &img, &pred, &EchoBackend, &ScoringConfig::default()).unwrap();
        assert_eq!(s.s, 0.0);
        assert!(s.no_objects);
        assert_eq!(s.num_objects, 0);
    }

    #[test]
    fn empty_backend_gives_zero() {
        let img = Image::filled(6, 4, 0);
        let s = score_sample("a", &img, &two_blob_prediction(), &EmptyBackend, &ScoringConfig::default()).unwrap();
        assert_eq!(s.s, 0.0);
        assert!(!s.no_objects);
    }

    #[test]
    fn flat_mean() {
        assert_eq!(aggregate(&[1.2, 0.8]), 1.0);
        assert_eq!(aggregate(&[]), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let img = Image::filled(5, 4, 0);
        let err = score_sample("a", &img, &two_blob_prediction(), &EchoBackend, &ScoringConfig::default()).unwrap_err();
        assert!(matches!(err, ScoreError::DimensionMismatch { .. }));
    }

    struct Failing;

    impl PromptableSegmenter for Failing {
        fn id(&self) -> &str {
            "failing"
        }

        fn segment_raw(&self, _: &PromptQuery<'_>) -> Result<BinaryMask, BackendError> {
            Err(BackendError::Unavailable {
                attempts: 1,
                message: "down".into(),
            })
        }
    }

    #[test]
    fn backend_failure_aborts_sample() {
        let img = Image::filled(6, 4, 0);
        let err = score_sample("a", &img, &two_blob_prediction(), &Failing, &ScoringConfig::default()).unwrap_err();
        match err {
            ScoreError::Backend {
                class_index,
                object_index,
                ..
            } => assert_eq!((class_index, object_index), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn baseline_cases() {
        let one_hot = ProbabilityMap::new(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(confidence_baseline(&one_hot), 1.0);
        let uniform = ProbabilityMap::new(2, 1, 2, vec![0.5; 4]).unwrap();
        assert_eq!(confidence_baseline(&uniform), 0.5);
        let mixed = ProbabilityMap::new(2, 1, 2, vec![0.9, 0.1, 0.4, 0.6]).unwrap();
        assert!((confidence_baseline(&mixed) - 0.75).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn aggregate_permutation_invariant(mut v in prop::collection::vec(0.0f64..=2.0, 1..40), seed in any::<u64>()) {
            let a = aggregate(&v);
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..v.len()).rev() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                v.swap(i, (state % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(a, aggregate(&v));
            prop_assert!((0.0..=2.0).contains(&a));
        }

        #[test]
        fn dice_symmetric_and_bounded(bits_a in prop::collection::vec(any::<bool>(), 36), bits_b in prop::collection::vec(any::<bool>(), 36)) {
            let a = BinaryMask::from_bits(6, 6, bits_a).unwrap();
            let b = BinaryMask::from_bits(6, 6, bits_b).unwrap();
            let d = dice(&a, &b);
            prop_assert_eq!(d, dice(&b, &a));
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!(iou(&a, &b) <= d + 1e-15);
        }
    }
}
