//! Promptable segmenters.
//!
//! A backend answers one prompt (a point or a box) over one image with
//! exactly one binary mask of the image's dimensions. Three implementations
//! are selectable through [`BackendConfig`]:
//!
//! - [`ReferenceBackend`]: deterministic region growing / Otsu stand-in.
//! - [`FileBackend`]: replays precomputed masks from disk.
//! - [`RemoteBackend`]: JSON-over-HTTP client for an external segmenter service.
//!
//! [`EchoBackend`] and [`EmptyBackend`] are fixed-point test doubles.

mod file;
mod reference;
mod remote;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objects::{BoxPrompt, ObjectInstance, PointPrompt};
use crate::raster::{BinaryMask, Image, RasterError, SegmentationMap};

pub use file::FileBackend;
pub use reference::ReferenceBackend;
pub use remote::{RemoteBackend, WireMaskResponse, WirePrompt, WireRequest, SEGMENT_PATH};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend protocol violation: {field}: {message}")]
    Protocol { field: String, message: String },
    #[error("missing precomputed mask: {}", path.display())]
    MissingFixture { path: PathBuf },
    #[error("backend returned a {got_w}x{got_h} mask for a {expected_w}x{expected_h} image")]
    DimensionLaw {
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("prompt outside image bounds: {0}")]
    PromptOutOfBounds(String),
    #[error("query context required: {0}")]
    MissingContext(&'static str),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl BackendError {
    /// Whether the failure is a transport/service condition rather than bad input.
    pub fn is_transport(&self) -> bool {
        matches!(self, Self::Unavailable { .. } | Self::Protocol { .. } | Self::DimensionLaw { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Prompt {
    Point(PointPrompt),
    Box(BoxPrompt),
}

impl Prompt {
    pub fn kind(&self) -> PromptKind {
        match self {
            Prompt::Point(_) => PromptKind::Point,
            Prompt::Box(_) => PromptKind::Box,
        }
    }

    fn check_bounds(&self, width: u32, height: u32) -> Result<(), BackendError> {
        let ok = match self {
            Prompt::Point(p) => p.x < width && p.y < height,
            Prompt::Box(b) => b.x_min <= b.x_max && b.y_min <= b.y_max && b.x_max < width && b.y_max < height,
        };
        if ok {
            Ok(())
        } else {
            Err(BackendError::PromptOutOfBounds(format!("{self:?} on {width}x{height} image")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Point,
    Box,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Point => "point",
            PromptKind::Box => "box",
        }
    }
}

/// Which object a prompt was derived from. Backends that replay fixtures or
/// echo the query need it; image-only backends ignore it.
#[derive(Clone, Copy, Debug)]
pub struct QueryContext<'a> {
    pub sample_id: &'a str,
    pub class_index: usize,
    pub object_index: usize,
    pub mask: &'a BinaryMask,
}

impl<'a> QueryContext<'a> {
    pub fn for_object(sample_id: &'a str, object: &'a ObjectInstance) -> Self {
        Self {
            sample_id,
            class_index: object.class_index,
            object_index: object.object_index,
            mask: &object.mask,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PromptQuery<'a> {
    pub image: &'a Image,
    pub prompt: Prompt,
    pub context: Option<QueryContext<'a>>,
}

#[derive(Clone, Debug)]
pub struct PromptResult {
    pub mask: BinaryMask,
    pub source: String,
    /// Wall-clock time of the call; diagnostic only.
    pub latency_ms: f64,
}

/// A promptable segmenter. Implementations must be callable concurrently.
pub trait PromptableSegmenter: Send + Sync {
    fn id(&self) -> &str;

    /// Answers a single prompt. Callers should go through [`segment`], which
    /// validates prompt bounds and the returned mask's dimensions.
    fn segment_raw(&self, query: &PromptQuery<'_>) -> Result<BinaryMask, BackendError>;
}

/// Runs one query with bounds and dimension-law checks.
pub fn segment(backend: &dyn PromptableSegmenter, query: &PromptQuery<'_>) -> Result<PromptResult, BackendError> {
    let (w, h) = query.image.dims();
    query.prompt.check_bounds(w, h)?;
    let start = Instant::now();
    let mask = backend.segment_raw(query)?;
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    if mask.dims() != (w, h) {
        return Err(BackendError::DimensionLaw {
            expected_w: w,
            expected_h: h,
            got_w: mask.width(),
            got_h: mask.height(),
        });
    }
    Ok(PromptResult {
        mask,
        source: backend.id().to_string(),
        latency_ms,
    })
}

pub fn segment_point(
    backend: &dyn PromptableSegmenter,
    image: &Image,
    prompt: PointPrompt,
    context: Option<QueryContext<'_>>,
) -> Result<PromptResult, BackendError> {
    segment(
        backend,
        &PromptQuery {
            image,
            prompt: Prompt::Point(prompt),
            context,
        },
    )
}

pub fn segment_box(
    backend: &dyn PromptableSegmenter,
    image: &Image,
    prompt: BoxPrompt,
    context: Option<QueryContext<'_>>,
) -> Result<PromptResult, BackendError> {
    segment(
        backend,
        &PromptQuery {
            image,
            prompt: Prompt::Box(prompt),
            context,
        },
    )
}

/// Per class, the union of the box-prompt masks of that class's objects.
pub fn replace_prediction(
    backend: &dyn PromptableSegmenter,
    sample_id: &str,
    image: &Image,
    num_classes: usize,
    objects: &[ObjectInstance],
) -> Result<SegmentationMap, BackendError> {
    let (w, h) = image.dims();
    let mut channels = vec![BinaryMask::empty(w, h); num_classes.max(1)];
    for obj in objects {
        let ctx = QueryContext::for_object(sample_id, obj);
        let result = segment_box(backend, image, obj.bbox, Some(ctx))?;
        let ch = channels.get_mut(obj.class_index - 1).ok_or_else(|| {
            BackendError::Config(format!(
                "object class {} exceeds {num_classes} classes",
                obj.class_index
            ))
        })?;
        ch.union_with(&result.mask);
    }
    Ok(SegmentationMap::new(channels)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Reference,
    File,
    Remote,
}

pub const DEFAULT_TOLERANCE: u8 = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Intensity tolerance of the reference backend's point mode.
    pub tolerance: u32,
    /// Fixture root of the file backend.
    pub root: Option<PathBuf>,
    /// Base URL of the remote backend.
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Reference,
            tolerance: u32::from(DEFAULT_TOLERANCE),
            root: None,
            endpoint: None,
            timeout_secs: 30.0,
            retries: 2,
            max_in_flight: 4,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.tolerance > 255 {
            return Err(BackendError::Config(format!(
                "tolerance {} outside [0, 255]",
                self.tolerance
            )));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(BackendError::Config(format!(
                "timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        match self.kind {
            BackendKind::File if self.root.is_none() => {
                Err(BackendError::Config("file backend requires `root`".into()))
            }
            BackendKind::Remote if self.endpoint.is_none() => {
                Err(BackendError::Config("remote backend requires `endpoint`".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn PromptableSegmenter>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Reference => Box::new(ReferenceBackend::new(self.tolerance as u8)),
            BackendKind::File => Box::new(FileBackend::new(self.root.clone().expect("validated"))),
            BackendKind::Remote => Box::new(RemoteBackend::new(
                self.endpoint.clone().expect("validated"),
                Duration::from_secs_f64(self.timeout_secs),
                self.retries,
                self.max_in_flight,
            )),
        })
    }
}

/// Returns the queried object's own mask for every prompt.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoBackend;

impl PromptableSegmenter for EchoBackend {
    fn id(&self) -> &str {
        "echo"
    }

    fn segment_raw(&self, query: &PromptQuery<'_>) -> Result<BinaryMask, BackendError> {
        let ctx = query
            .context
            .ok_or(BackendError::MissingContext("echo backend needs the object mask"))?;
        Ok(ctx.mask.clone())
    }
}

/// Returns an empty mask for every prompt.
#[derive(Clone, Copy, Debug, Default)]
pub struct EmptyBackend;

impl PromptableSegmenter for EmptyBackend {
    fn id(&self) -> &str {
        "empty"
    }

    fn segment_raw(&self, query: &PromptQuery<'_>) -> Result<BinaryMask, BackendError> {
        Ok(BinaryMask::empty(query.image.width(), query.image.height()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::{extract_objects, Connectivity};

    struct WrongSize;

    impl PromptableSegmenter for WrongSize {
        fn id(&self) -> &str {
            "wrong"
        }

        fn segment_raw(&self, _: &PromptQuery<'_>) -> Result<BinaryMask, BackendError> {
            Ok(BinaryMask::empty(1, 1))
        }
    }

    #[test]
    fn dimension_law_enforced() {
        let img = Image::filled(4, 4, 0);
        let err = segment_point(&WrongSize, &img, PointPrompt { x: 0, y: 0 }, None).unwrap_err();
        assert!(matches!(err, BackendError::DimensionLaw { got_w: 1, .. }));
    }

    #[test]
    fn out_of_bounds_prompt_rejected() {
        let img = Image::filled(4, 4, 0);
        let err = segment_point(&EmptyBackend, &img, PointPrompt { x: 4, y: 0 }, None).unwrap_err();
        assert!(matches!(err, BackendError::PromptOutOfBounds(_)));
        let bad_box = BoxPrompt {
            x_min: 2,
            y_min: 0,
            x_max: 1,
            y_max: 0,
        };
        assert!(segment_box(&EmptyBackend, &img, bad_box, None).is_err());
    }

    fn blobs() -> SegmentationMap {
        let c1 = BinaryMask::from_fn(8, 8, |x, y| (1..3).contains(&x) && (1..3).contains(&y));
        let c2 = BinaryMask::from_fn(8, 8, |x, y| x >= 5 && y >= 5);
        let c3 = BinaryMask::empty(8, 8);
        SegmentationMap::new(vec![c1, c2, c3]).unwrap()
    }

    #[test]
    fn replace_with_echo_is_fixed_point() {
        let pred = blobs();
        let img = Image::filled(8, 8, 10);
        let objs = extract_objects(&pred, Connectivity::Eight, 1);
        let out = replace_prediction(&EchoBackend, "s", &img, 3, &objs).unwrap();
        assert_eq!(out, pred);
    }

    #[test]
    fn replace_empty_objects() {
        let img = Image::filled(8, 8, 10);
        let out = replace_prediction(&EchoBackend, "s", &img, 2, &[]).unwrap();
        assert_eq!(out, SegmentationMap::empty(8, 8, 2));
    }

    struct Fixed(BinaryMask, BinaryMask);

    impl PromptableSegmenter for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }

        fn segment_raw(&self, q: &PromptQuery<'_>) -> Result<BinaryMask, BackendError> {
            Ok(if q.context.unwrap().object_index == 1 {
                self.0.clone()
            } else {
                self.1.clone()
            })
        }
    }

    #[test]
    fn replace_unions_overlapping_masks() {
        let a = BinaryMask::from_fn(6, 1, |x, _| x < 3);
        let b = BinaryMask::from_fn(6, 1, |x, _| (2..5).contains(&x));
        let pred = SegmentationMap::new(vec![BinaryMask::from_fn(6, 1, |x, _| x == 0 || x == 5)]).unwrap();
        let objs = extract_objects(&pred, Connectivity::Eight, 1);
        assert_eq!(objs.len(), 2);
        let img = Image::filled(6, 1, 0);
        let out = replace_prediction(&Fixed(a, b), "s", &img, 1, &objs).unwrap();
        assert_eq!(out.class(1).bits(), &[true, true, true, true, true, false]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = BackendConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.tolerance = 256;
        assert!(cfg.validate().is_err());
        cfg = BackendConfig {
            kind: BackendKind::File,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg = BackendConfig {
            timeout_secs: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn prompt_wire_shape() {
        let p = Prompt::Point(PointPrompt { x: 3, y: 4 });
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"type":"point","x":3,"y":4}"#);
        let b = Prompt::Box(BoxPrompt {
            x_min: 1,
            y_min: 2,
            x_max: 3,
            y_max: 4,
        });
        assert_eq!(
            serde_json::to_string(&b).unwrap(),
            r#"{"type":"box","x_min":1,"y_min":2,"x_max":3,"y_max":4}"#
        );
    }
}
