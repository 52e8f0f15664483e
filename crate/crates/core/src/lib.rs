//! Ground-truth-free segmentation quality assessment.
//!
//! A prediction is decomposed into per-class connected objects. Each object
//! yields a center-point prompt and a bounding-box prompt; a promptable
//! segmenter answers both, and the agreement (Dice by default) between the
//! object and the two answers is the object's score. The sample score is the
//! flat mean of object scores, in `[0, 2]`.
//!
//! Modules:
//! - [`raster`]: images, masks, probability maps and their PNG encodings.
//! - [`objects`]: connected components and prompt derivation.
//! - [`backend`]: the promptable-segmenter trait and its implementations.
//! - [`scoring`]: agreement metrics, per-sample scores, confidence baseline.
//! - [`evaluation`]: correlation and failure-detection statistics against true Dice.
//! - [`synth`]: synthetic scenes and degraded predictions with known Dice.

pub mod backend;
pub mod evaluation;
pub mod manifest;
pub mod objects;
pub mod raster;
pub mod scoring;
pub mod synth;

pub use backend::{BackendConfig, BackendError, BackendKind, Prompt, PromptQuery, PromptResult, PromptableSegmenter};
pub use evaluation::{EvalError, PairedEntry, PairedSeries};
pub use objects::{BoxPrompt, Connectivity, ObjectInstance, PointPrompt};
pub use raster::{BinaryMask, Image, ProbabilityMap, RasterError, SegmentationMap};
pub use scoring::{Metric, ObjectScore, SampleScore, ScoreError, ScoringConfig};
