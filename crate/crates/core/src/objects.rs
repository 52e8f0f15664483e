//! Object instances and their visual prompts.
//!
//! Each class channel is split into connected components; every component
//! becomes one [`ObjectInstance`] carrying a center-point prompt and a tight
//! bounding-box prompt.

use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, SegmentationMap};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u8) -> Option<Self> {
        match n {
            4 => Some(Self::Four),
            8 => Some(Self::Eight),
            _ => None,
        }
    }

    pub fn count(self) -> u8 {
        match self {
            Self::Four => 4,
            Self::Eight => 8,
        }
    }

    /// Neighbour offsets already visited by a row-major raster scan.
    fn backward_offsets(self) -> &'static [(i64, i64)] {
        match self {
            Self::Four => &[(-1, 0), (0, -1)],
            Self::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
        }
    }

    /// All neighbour offsets.
    pub fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Self::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Self::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: u32,
    pub y: u32,
}

/// Inclusive pixel bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoxPrompt {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    pub fn center(&self) -> PointPrompt {
        PointPrompt {
            x: (self.x_min + self.x_max) / 2,
            y: (self.y_min + self.y_max) / 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectInstance {
    /// 1-based class index.
    pub class_index: usize,
    /// 1-based object index within its class.
    pub object_index: usize,
    pub mask: BinaryMask,
    pub point: PointPrompt,
    pub bbox: BoxPrompt,
    pub area: usize,
}

/// Minimal disjoint-set forest over provisional labels.
struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        Self { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut id: u32) -> u32 {
        let mut root = id;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[id as usize] != root {
            let next = self.parent[id as usize];
            self.parent[id as usize] = root;
            id = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels the connected components of `channel`.
///
/// Components smaller than `min_area` are discarded. The result is ordered by
/// each component's first pixel in row-major order.
pub fn connected_components(channel: &BinaryMask, connectivity: Connectivity, min_area: usize) -> Vec<BinaryMask> {
    let (w, h) = channel.dims();
    let mut labels = vec![u32::MAX; w as usize * h as usize];
    let mut uf = UnionFind::new();

    for y in 0..h {
        for x in 0..w {
            if !channel.get(x, y) {
                continue;
            }
            let idx = channel.index(x, y);
            let mut current = u32::MAX;
            for &(dx, dy) in connectivity.backward_offsets() {
                let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                if !channel.get_signed(nx, ny) {
                    continue;
                }
                let n = labels[channel.index(nx as u32, ny as u32)];
                if current == u32::MAX {
                    current = n;
                } else {
                    uf.union(current, n);
                }
            }
            labels[idx] = if current == u32::MAX { uf.make() } else { current };
        }
    }

    // Slots are assigned on first encounter in row-major order.
    let mut root_to_slot: Vec<u32> = vec![u32::MAX; uf.parent.len()];
    let mut components: Vec<BinaryMask> = Vec::new();
    let mut areas: Vec<usize> = Vec::new();
    for (idx, &l) in labels.iter().enumerate() {
        if l == u32::MAX {
            continue;
        }
        let root = uf.find(l) as usize;
        if root_to_slot[root] == u32::MAX {
            root_to_slot[root] = components.len() as u32;
            components.push(BinaryMask::empty(w, h));
            areas.push(0);
        }
        let slot = root_to_slot[root] as usize;
        components[slot].set((idx % w as usize) as u32, (idx / w as usize) as u32, true);
        areas[slot] += 1;
    }

    components
        .into_iter()
        .zip(areas)
        .filter(|&(_, a)| a >= min_area.max(1))
        .map(|(m, _)| m)
        .collect()
}

/// Center point and tight bounding box of a nonempty mask.
///
/// The point is the coordinate mean rounded per axis as `floor(mean + 0.5)`.
/// When that lands outside the mask it snaps to the nearest mask pixel by
/// squared Euclidean distance, ties going to the smallest row, then column.
///
/// # Panics
/// If `mask` is empty.
pub fn derive_prompts(mask: &BinaryMask) -> (PointPrompt, BoxPrompt) {
    let mut count = 0u64;
    let (mut sx, mut sy) = (0u64, 0u64);
    let mut bbox = BoxPrompt {
        x_min: u32::MAX,
        y_min: u32::MAX,
        x_max: 0,
        y_max: 0,
    };
    for (x, y) in mask.pixels() {
        count += 1;
        sx += u64::from(x);
        sy += u64::from(y);
        bbox.x_min = bbox.x_min.min(x);
        bbox.y_min = bbox.y_min.min(y);
        bbox.x_max = bbox.x_max.max(x);
        bbox.y_max = bbox.y_max.max(y);
    }
    assert!(count > 0, "derive_prompts requires a nonempty mask");

    let round = |sum: u64| (sum as f64 / count as f64 + 0.5).floor() as u32;
    let (cx, cy) = (round(sx), round(sy));
    if mask.get(cx, cy) {
        return (PointPrompt { x: cx, y: cy }, bbox);
    }

    // Row-major iteration with a strict comparison keeps the first (smallest
    // row, then column) pixel among equals.
    let mut best = (u64::MAX, 0u32, 0u32);
    for (x, y) in mask.pixels() {
        let dx = i64::from(x) - i64::from(cx);
        let dy = i64::from(y) - i64::from(cy);
        let d = (dx * dx + dy * dy) as u64;
        if d < best.0 {
            best = (d, x, y);
        }
    }
    (PointPrompt { x: best.1, y: best.2 }, bbox)
}

/// Objects of every class, ordered by class index then component order.
pub fn extract_objects(prediction: &SegmentationMap, connectivity: Connectivity, min_area: usize) -> Vec<ObjectInstance> {
    let mut out = Vec::new();
    for (c, channel) in prediction.channels().iter().enumerate() {
        for (j, mask) in connected_components(channel, connectivity, min_area).into_iter().enumerate() {
            let (point, bbox) = derive_prompts(&mask);
            let area = mask.area();
            out.push(ObjectInstance {
                class_index: c + 1,
                object_index: j + 1,
                mask,
                point,
                bbox,
                area,
            });
        }
    }
    out
}
