//! Synthetic scenes, ground truths and degraded predictions with known Dice.
//!
//! A scene is a noisy two-tone image of well-separated objects. Degrading its
//! truth with a controlled error mode gives a prediction whose true Dice is
//! exactly computable, plus a softmax-like probability map for the
//! confidence baseline.

mod corpus;
pub mod morph;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objects::{connected_components, Connectivity};
use crate::raster::{BinaryMask, Image, ProbabilityMap, RasterError, SegmentationMap};

pub use corpus::{build_corpus, default_degradations, plan_sample, CorpusSample};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidScene(String),
    #[error("invalid degradation spec: {0}")]
    InvalidDegradation(String),
    #[error("could not place object {object} of {count} after {tries} tries")]
    Placement { object: usize, count: usize, tries: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Ellipse,
    Rectangle,
    /// Random walk dilated by a disk.
    Blob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Inclusive range of objects per scene.
    pub object_count: (usize, usize),
    /// Inclusive range of object half-extents in pixels.
    pub object_radius: (u32, u32),
    pub shapes: Vec<ShapeKind>,
    pub num_classes: usize,
    pub foreground_mean: f64,
    pub background_mean: f64,
    pub noise_sigma: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 20_231_106,
            width: 96,
            height: 96,
            object_count: (1, 2),
            object_radius: (8, 20),
            shapes: vec![ShapeKind::Ellipse, ShapeKind::Rectangle, ShapeKind::Blob],
            num_classes: 1,
            foreground_mean: 170.0,
            background_mean: 70.0,
            noise_sigma: 4.0,
        }
    }
}

/// Minimum gap in pixels between placed objects.
const OBJECT_GAP: u32 = 3;
const PLACEMENT_TRIES: usize = 500;

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad("dimensions must be positive".into());
        }
        let (lo, hi) = self.object_count;
        if lo == 0 || lo > hi {
            return bad(format!("object_count range ({lo}, {hi}) must satisfy 1 <= min <= max"));
        }
        let (rlo, rhi) = self.object_radius;
        if rlo == 0 || rlo > rhi {
            return bad(format!("object_radius range ({rlo}, {rhi}) must satisfy 1 <= min <= max"));
        }
        if 2 * rhi + 2 > self.width.min(self.height) {
            return bad(format!("object radius {rhi} does not fit a {}x{} image", self.width, self.height));
        }
        if self.shapes.is_empty() {
            return bad("at least one shape kind is required".into());
        }
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1".into());
        }
        for (name, v) in [("foreground_mean", self.foreground_mean), ("background_mean", self.background_mean)] {
            if !(0.0..=255.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 255]"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and non-negative", self.noise_sigma));
        }
        let sep = (self.foreground_mean - self.background_mean).abs();
        if sep < 3.0 * self.noise_sigma || sep == 0.0 {
            return bad(format!(
                "foreground/background separation {sep} below 3 sigma ({})",
                3.0 * self.noise_sigma
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub image: Image,
    pub truth: SegmentationMap,
}

fn rasterize(rng: &mut ChaCha8Rng, shape: ShapeKind, w: u32, h: u32, cx: i64, cy: i64, r: u32) -> BinaryMask {
    let rf = f64::from(r);
    match shape {
        ShapeKind::Ellipse => {
            let b = rf * rng.random_range(0.6..=1.0);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (s, c) = theta.sin_cos();
            BinaryMask::from_fn(w, h, |x, y| {
                let (dx, dy) = ((i64::from(x) - cx) as f64, (i64::from(y) - cy) as f64);
                let u = (dx * c + dy * s) / rf;
                let v = (-dx * s + dy * c) / b;
                u * u + v * v <= 1.0
            })
        }
        ShapeKind::Rectangle => {
            let hw = i64::from(r);
            let hh = (rf * rng.random_range(0.6..=1.0)).round() as i64;
            BinaryMask::from_fn(w, h, |x, y| {
                (i64::from(x) - cx).abs() <= hw && (i64::from(y) - cy).abs() <= hh
            })
        }
        ShapeKind::Blob => {
            let brush = (r / 2).max(1);
            let reach = f64::from(r - brush);
            let steps = 4 * r as usize;
            let mut walk = BinaryMask::empty(w, h);
            let (mut px, mut py) = (0i64, 0i64);
            walk.set(cx as u32, cy as u32, true);
            for _ in 0..steps {
                let (dx, dy) = (rng.random_range(-1..=1), rng.random_range(-1..=1));
                let (nx, ny) = (px + dx, py + dy);
                if ((nx * nx + ny * ny) as f64).sqrt() <= reach {
                    px = nx;
                    py = ny;
                    walk.set((cx + px) as u32, (cy + py) as u32, true);
                }
            }
            morph::dilate(&walk, brush)
        }
    }
}

/// Draws a scene; a pure function of `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let count = rng.random_range(spec.object_count.0..=spec.object_count.1);

    let mut channels = vec![BinaryMask::empty(w, h); spec.num_classes];
    let mut occupied = BinaryMask::empty(w, h);
    for k in 0..count {
        let mut placed = false;
        for _ in 0..PLACEMENT_TRIES {
            let r = rng.random_range(spec.object_radius.0..=spec.object_radius.1);
            let shape = spec.shapes[rng.random_range(0..spec.shapes.len())];
            let margin = i64::from(r) + 1;
            let cx = rng.random_range(margin..=i64::from(w) - 1 - margin);
            let cy = rng.random_range(margin..=i64::from(h) - 1 - margin);
            let obj = rasterize(&mut rng, shape, w, h, cx, cy, r);
            if obj.is_empty() || obj.intersection_area(&occupied) > 0 {
                continue;
            }
            occupied.union_with(&morph::dilate(&obj, OBJECT_GAP));
            channels[k % spec.num_classes].union_with(&obj);
            placed = true;
            break;
        }
        if !placed {
            return Err(SynthError::Placement {
                object: k + 1,
                count,
                tries: PLACEMENT_TRIES,
            });
        }
    }

    let truth = SegmentationMap::new(channels)?;
    let support = truth.support();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| SynthError::InvalidScene(e.to_string()))?;
    let pixels: Vec<u8> = support
        .bits()
        .iter()
        .map(|&fg| {
            let mean = if fg { spec.foreground_mean } else { spec.background_mean };
            let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (mean + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(Scene {
        image: Image::gray(w, h, pixels)?,
        truth,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    /// Disk erosion; magnitude = radius.
    Erode,
    /// Disk dilation; magnitude = radius.
    Dilate,
    /// Shift along one of the four axis directions; magnitude = pixels.
    Translate,
    /// Smooth random boundary displacement; magnitude = max displacement.
    BoundaryJitter,
    /// Removes whole objects; magnitude = number removed.
    DropObject,
    /// Adds false-positive disks; magnitude = number added.
    SpuriousBlob,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 6] = [
        Self::Erode,
        Self::Dilate,
        Self::Translate,
        Self::BoundaryJitter,
        Self::DropObject,
        Self::SpuriousBlob,
    ];

    /// Largest accepted magnitude.
    pub fn max_magnitude(self) -> u32 {
        match self {
            Self::Erode | Self::Dilate => 32,
            Self::Translate => 64,
            Self::BoundaryJitter => 16,
            Self::DropObject => 64,
            Self::SpuriousBlob => 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub magnitude: u32,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(kind: DegradationKind, magnitude: u32, seed: u64) -> Self {
        Self { kind, magnitude, seed }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.magnitude > self.kind.max_magnitude() {
            return Err(SynthError::InvalidDegradation(format!(
                "{:?} magnitude {} exceeds {}",
                self.kind,
                self.magnitude,
                self.kind.max_magnitude()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Degraded {
    pub prediction: SegmentationMap,
    /// `C + 1` channels, background first.
    pub probability: ProbabilityMap,
}

/// Confidence of an unperturbed pixel relative to the `1/K` floor.
const CONFIDENCE_CEILING: (f64, f64) = (0.90, 0.999);
/// Decay length (pixels) of confidence near boundaries and modified pixels.
const CONFIDENCE_DECAY: f64 = 2.0;

/// Smooth noise in `[-amplitude, amplitude]`: bilinear interpolation of a
/// coarse random lattice.
fn smooth_field(rng: &mut ChaCha8Rng, w: u32, h: u32, amplitude: f64) -> Vec<f64> {
    const CELL: u32 = 8;
    let gw = (w / CELL + 2) as usize;
    let gh = (h / CELL + 2) as usize;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut out = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (f64::from(x) / f64::from(CELL), f64::from(y) / f64::from(CELL));
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let g = |i: usize, j: usize| grid[j * gw + i];
            let v = g(ix, iy) * (1.0 - tx) * (1.0 - ty)
                + g(ix + 1, iy) * tx * (1.0 - ty)
                + g(ix, iy + 1) * (1.0 - tx) * ty
                + g(ix + 1, iy + 1) * tx * ty;
            out.push(v * amplitude);
        }
    }
    out
}

fn random_disk(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BinaryMask {
    let r = rng.random_range(3..=6i64);
    let cx = rng.random_range(0..i64::from(w));
    let cy = rng.random_range(0..i64::from(h));
    BinaryMask::from_fn(w, h, |x, y| {
        let (dx, dy) = (i64::from(x) - cx, i64::from(y) - cy);
        dx * dx + dy * dy <= r * r
    })
}

/// Applies one error mode to `truth` and synthesizes matching probabilities.
pub fn degrade(truth: &SegmentationMap, spec: &DegradationSpec) -> Result<Degraded, SynthError> {
    spec.validate()?;
    let (w, h) = truth.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.magnitude;

    let channels: Vec<BinaryMask> = match spec.kind {
        DegradationKind::Erode => truth.channels().iter().map(|c| morph::erode(c, m)).collect(),
        DegradationKind::Dilate => truth.channels().iter().map(|c| morph::dilate(c, m)).collect(),
        DegradationKind::Translate => {
            let (ux, uy) = [(1, 0), (-1, 0), (0, 1), (0, -1)][rng.random_range(0..4)];
            let (dx, dy) = (ux * i64::from(m), uy * i64::from(m));
            truth.channels().iter().map(|c| morph::translate(c, dx, dy)).collect()
        }
        DegradationKind::BoundaryJitter => {
            let field = smooth_field(&mut rng, w, h, f64::from(m));
            truth
                .channels()
                .iter()
                .map(|c| {
                    if m == 0 {
                        return c.clone();
                    }
                    let sd = morph::signed_distance(c, m + 1);
                    let bits = sd.iter().zip(&field).map(|(d, n)| d + n > 0.0).collect();
                    BinaryMask::from_bits(w, h, bits).expect("same size")
                })
                .collect()
        }
        DegradationKind::DropObject => {
            let mut objects: Vec<(usize, BinaryMask)> = truth
                .channels()
                .iter()
                .enumerate()
                .flat_map(|(c, ch)| {
                    connected_components(ch, Connectivity::Eight, 1)
                        .into_iter()
                        .map(move |o| (c, o))
                })
                .collect();
            let mut channels = truth.channels().to_vec();
            for _ in 0..(m as usize).min(objects.len()) {
                let (c, obj) = objects.swap_remove(rng.random_range(0..objects.len()));
                for (x, y) in obj.pixels() {
                    channels[c].set(x, y, false);
                }
            }
            channels
        }
        DegradationKind::SpuriousBlob => {
            let mut channels = truth.channels().to_vec();
            for _ in 0..m {
                let blob = random_disk(&mut rng, w, h);
                let c = rng.random_range(0..channels.len());
                channels[c].union_with(&blob);
            }
            channels
        }
    };
    let prediction = SegmentationMap::new(channels)?;
    let probability = synthesize_probability(&mut rng, truth, &prediction)?;
    Ok(Degraded {
        prediction,
        probability,
    })
}

/// Softmax-like map whose argmax is the prediction (background = channel 0,
/// overlaps resolved to the lowest class). Confidence decays toward `1/K`
/// near predicted boundaries and near pixels where prediction and truth
/// disagree; the per-sample ceiling is drawn at random.
fn synthesize_probability(
    rng: &mut ChaCha8Rng,
    truth: &SegmentationMap,
    prediction: &SegmentationMap,
) -> Result<ProbabilityMap, SynthError> {
    let (w, h) = prediction.dims();
    let k = prediction.num_classes() + 1;
    let floor = 1.0 / k as f64;
    let ceiling = rng.random_range(CONFIDENCE_CEILING.0..=CONFIDENCE_CEILING.1);

    let mut uncertain = BinaryMask::empty(w, h);
    for (p, t) in prediction.channels().iter().zip(truth.channels()) {
        uncertain.union_with(&morph::inner_boundary(p));
        let diff = BinaryMask::from_fn(w, h, |x, y| p.get(x, y) != t.get(x, y));
        uncertain.union_with(&diff);
    }
    let dist = morph::chessboard_distance(&uncertain);

    let mut values = Vec::with_capacity(w as usize * h as usize * k);
    for y in 0..h {
        for x in 0..w {
            let idx = y as usize * w as usize + x as usize;
            let label = prediction
                .channels()
                .iter()
                .position(|c| c.get(x, y))
                .map_or(0, |c| c + 1);
            let d = f64::from(dist[idx].min(1_000));
            let confidence = ceiling * (1.0 - 0.8 * (-d / CONFIDENCE_DECAY).exp());
            let p_max = floor + (1.0 - floor) * confidence;
            let rest = (1.0 - p_max) / (k - 1) as f64;
            values.extend((0..k).map(|c| if c == label { p_max } else { rest }));
        }
    }
    Ok(ProbabilityMap::new(w, h, k, values)?)
}

/// Reproducible per-index seed derivation (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
