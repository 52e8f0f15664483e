use std::path::{Path, PathBuf};

use super::{BackendError, PromptKind, PromptQuery, PromptableSegmenter};
use crate::raster::{load_mask, BinaryMask};

/// Replays precomputed masks laid out as
/// `{root}/{sample_id}/{class}_{object}_{point|box}.png`.
#[derive(Clone, Debug)]
pub struct FileBackend {
    root: PathBuf,
}

impl FileBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn fixture_path(&self, sample_id: &str, class_index: usize, object_index: usize, kind: PromptKind) -> PathBuf {
        self.root
            .join(sample_id)
            .join(format!("{class_index}_{object_index}_{}.png", kind.as_str()))
    }
}

impl PromptableSegmenter for FileBackend {
    fn id(&self) -> &str {
        "file"
    }

    fn segment_raw(&self, query: &PromptQuery<'_>) -> Result<BinaryMask, BackendError> {
        let ctx = query
            .context
            .ok_or(BackendError::MissingContext("file backend needs sample and object ids"))?;
        let path = self.fixture_path(ctx.sample_id, ctx.class_index, ctx.object_index, query.prompt.kind());
        if !path.is_file() {
            return Err(BackendError::MissingFixture { path });
        }
        Ok(load_mask(&path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{segment_box, segment_point, QueryContext};
    use crate::objects::{BoxPrompt, PointPrompt};
    use crate::raster::{save_mask, Image};

    #[test]
    fn replays_and_reports_missing() {
        let dir = tempfile::tempdir().unwrap();
        let be = FileBackend::new(dir.path());
        let stored = BinaryMask::from_fn(4, 3, |x, y| x == y);
        std::fs::create_dir_all(dir.path().join("s1")).unwrap();
        save_mask(&stored, be.fixture_path("s1", 1, 2, PromptKind::Point)).unwrap();

        let img = Image::filled(4, 3, 0);
        let obj = BinaryMask::empty(4, 3);
        let ctx = QueryContext {
            sample_id: "s1",
            class_index: 1,
            object_index: 2,
            mask: &obj,
        };
        let got = segment_point(&be, &img, PointPrompt { x: 0, y: 0 }, Some(ctx)).unwrap();
        assert_eq!(got.mask, stored);

        let b = BoxPrompt {
            x_min: 0,
            y_min: 0,
            x_max: 1,
            y_max: 1,
        };
        match segment_box(&be, &img, b, Some(ctx)).unwrap_err() {
            BackendError::MissingFixture { path } => assert!(path.ends_with("s1/1_2_box.png")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_size_fixture_violates_dimension_law() {
        let dir = tempfile::tempdir().unwrap();
        let be = FileBackend::new(dir.path());
        std::fs::create_dir_all(dir.path().join("s")).unwrap();
        save_mask(&BinaryMask::empty(2, 2), be.fixture_path("s", 1, 1, PromptKind::Point)).unwrap();
        let img = Image::filled(4, 3, 0);
        let obj = BinaryMask::empty(4, 3);
        let ctx = QueryContext {
            sample_id: "s",
            class_index: 1,
            object_index: 1,
            mask: &obj,
        };
        let err = segment_point(&be, &img, PointPrompt { x: 0, y: 0 }, Some(ctx)).unwrap_err();
        assert!(matches!(err, BackendError::DimensionLaw { .. }));
    }
}
