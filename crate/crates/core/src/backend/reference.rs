use std::collections::VecDeque;

use super::{BackendError, Prompt, PromptQuery, PromptableSegmenter};
use crate::objects::{connected_components, BoxPrompt, Connectivity, PointPrompt};
use crate::raster::{BinaryMask, Image};

/// Deterministic stand-in for a promptable segmenter.
///
/// Point prompts grow an 8-connected region of pixels whose luma is within
/// `tolerance` of the seed's luma. Box prompts split the box's luma histogram
/// with Otsu's threshold, keep the class whose mean is closer to the luma at
/// the box center, and return that class's largest 8-connected component
/// inside the box. A box holding a single luma value is returned whole.
#[derive(Clone, Debug)]
pub struct ReferenceBackend {
    tolerance: u8,
}

impl ReferenceBackend {
    pub fn new(tolerance: u8) -> Self {
        Self { tolerance }
    }

    pub fn tolerance(&self) -> u8 {
        self.tolerance
    }

    pub fn flood(&self, image: &Image, seed: PointPrompt) -> BinaryMask {
        let (w, h) = image.dims();
        let luma = image.luma_plane();
        let at = |x: u32, y: u32| luma[y as usize * w as usize + x as usize];
        let seed_luma = i16::from(at(seed.x, seed.y));
        let tol = i16::from(self.tolerance);

        let mut out = BinaryMask::empty(w, h);
        let mut queue = VecDeque::new();
        out.set(seed.x, seed.y, true);
        queue.push_back((seed.x, seed.y));
        while let Some((x, y)) = queue.pop_front() {
            for &(dx, dy) in Connectivity::Eight.offsets() {
                let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                if nx < 0 || ny < 0 || nx >= i64::from(w) || ny >= i64::from(h) {
                    continue;
                }
                let (nx, ny) = (nx as u32, ny as u32);
                if out.get(nx, ny) || (i16::from(at(nx, ny)) - seed_luma).abs() > tol {
                    continue;
                }
                out.set(nx, ny, true);
                queue.push_back((nx, ny));
            }
        }
        out
    }

    pub fn box_segment(&self, image: &Image, bbox: BoxPrompt) -> BinaryMask {
        let (w, h) = image.dims();
        let mut hist = [0u64; 256];
        for y in bbox.y_min..=bbox.y_max {
            for x in bbox.x_min..=bbox.x_max {
                hist[image.luma(x, y) as usize] += 1;
            }
        }

        let Some(threshold) = otsu_threshold(&hist) else {
            return BinaryMask::from_fn(w, h, |x, y| bbox.contains(x, y));
        };

        let (mut n_lo, mut s_lo, mut n_hi, mut s_hi) = (0u64, 0u64, 0u64, 0u64);
        for (v, &c) in hist.iter().enumerate() {
            if v as u8 <= threshold {
                n_lo += c;
                s_lo += c * v as u64;
            } else {
                n_hi += c;
                s_hi += c * v as u64;
            }
        }
        let mean_lo = s_lo as f64 / n_lo as f64;
        let mean_hi = s_hi as f64 / n_hi as f64;
        let center = bbox.center();
        let center_luma = image.luma(center.x, center.y);
        let c = f64::from(center_luma);
        let (d_lo, d_hi) = ((mean_lo - c).abs(), (mean_hi - c).abs());
        // Equidistant means fall back to the center pixel's own class.
        let keep_high = if d_lo == d_hi {
            center_luma > threshold
        } else {
            d_hi < d_lo
        };

        let class = BinaryMask::from_fn(w, h, |x, y| {
            bbox.contains(x, y) && ((image.luma(x, y) > threshold) == keep_high)
        });
        let mut best: Option<(usize, BinaryMask)> = None;
        for comp in connected_components(&class, Connectivity::Eight, 1) {
            let area = comp.area();
            if best.as_ref().is_none_or(|(a, _)| area > *a) {
                best = Some((area, comp));
            }
        }
        best.map(|(_, m)| m).unwrap_or_else(|| BinaryMask::empty(w, h))
    }
}

impl Default for ReferenceBackend {
    fn default() -> Self {
        Self::new(super::DEFAULT_TOLERANCE)
    }
}

impl PromptableSegmenter for ReferenceBackend {
    fn id(&self) -> &str {
        "reference"
    }

    fn segment_raw(&self, query: &PromptQuery<'_>) -> Result<BinaryMask, BackendError> {
        Ok(match query.prompt {
            Prompt::Point(p) => self.flood(query.image, p),
            Prompt::Box(b) => self.box_segment(query.image, b),
        })
    }
}

/// Otsu threshold `t` (classes `<= t` and `> t`) maximizing between-class
/// variance; the first maximizer wins. `None` for a single-valued histogram.
pub(crate) fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    if total == 0 || occupied < 2 {
        return None;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let mut w_lo = 0u64;
    let mut sum_lo = 0.0;
    let mut best: Option<(f64, u8)> = None;
    for (t, &count) in hist.iter().enumerate().take(255) {
        w_lo += count;
        sum_lo += t as f64 * count as f64;
        let w_hi = total - w_lo;
        if w_lo == 0 || w_hi == 0 {
            continue;
        }
        let mu_lo = sum_lo / w_lo as f64;
        let mu_hi = (sum_all - sum_lo) / w_hi as f64;
        let between = w_lo as f64 * w_hi as f64 * (mu_lo - mu_hi).powi(2);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, t as u8));
        }
    }
    best.map(|(_, t)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::segment_box;

    /// White `size`x`size` square at (`ox`, `oy`) on black.
    fn square_image(w: u32, h: u32, ox: u32, oy: u32, size: u32) -> Image {
        let px = (0..h)
            .flat_map(|y| {
                (0..w).map(move |x| {
                    if (ox..ox + size).contains(&x) && (oy..oy + size).contains(&y) {
                        255
                    } else {
                        0
                    }
                })
            })
            .collect();
        Image::gray(w, h, px).unwrap()
    }

    fn square_mask(w: u32, h: u32, ox: u32, oy: u32, size: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (ox..ox + size).contains(&x) && (oy..oy + size).contains(&y))
    }

    /// Plain recursive-stack flood fill used as an independent check.
    fn flood_oracle(image: &Image, sx: u32, sy: u32, tol: i32) -> BinaryMask {
        let (w, h) = image.dims();
        let seed = i32::from(image.luma(sx, sy));
        let mut seen = BinaryMask::empty(w, h);
        let mut stack = vec![(sx as i64, sy as i64)];
        while let Some((x, y)) = stack.pop() {
            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                continue;
            }
            let (ux, uy) = (x as u32, y as u32);
            if seen.get(ux, uy) || (i32::from(image.luma(ux, uy)) - seed).abs() > tol {
                continue;
            }
            seen.set(ux, uy, true);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx != 0 || dy != 0 {
                        stack.push((x + dx, y + dy));
                    }
                }
            }
        }
        seen
    }

    #[test]
    fn uniform_image_point_fills_everything() {
        let img = Image::filled(7, 5, 90);
        let m = ReferenceBackend::new(12).flood(&img, PointPrompt { x: 3, y: 2 });
        assert_eq!(m, BinaryMask::full(7, 5));
    }

    #[test]
    fn point_on_square_and_background() {
        let img = square_image(20, 20, 5, 5, 10);
        let be = ReferenceBackend::new(12);
        let sq = be.flood(&img, PointPrompt { x: 10, y: 10 });
        assert_eq!(sq, square_mask(20, 20, 5, 5, 10));
        assert_eq!(sq, flood_oracle(&img, 10, 10, 12));

        let bg = be.flood(&img, PointPrompt { x: 0, y: 0 });
        assert_eq!(bg, flood_oracle(&img, 0, 0, 12));
        assert_eq!(bg.area(), 400 - 100);
    }

    #[test]
    fn box_around_square() {
        let img = square_image(20, 20, 5, 5, 10);
        let be = ReferenceBackend::new(12);
        let tight = BoxPrompt {
            x_min: 5,
            y_min: 5,
            x_max: 14,
            y_max: 14,
        };
        assert_eq!(be.box_segment(&img, tight), square_mask(20, 20, 5, 5, 10));

        // Loose box with background inside: Otsu separates the two tones and
        // the center pixel is bright.
        let loose = BoxPrompt {
            x_min: 2,
            y_min: 2,
            x_max: 17,
            y_max: 17,
        };
        assert_eq!(be.box_segment(&img, loose), square_mask(20, 20, 5, 5, 10));
    }

    #[test]
    fn box_over_uniform_region_is_whole_box() {
        let img = Image::filled(10, 10, 40);
        let b = BoxPrompt {
            x_min: 2,
            y_min: 3,
            x_max: 6,
            y_max: 8,
        };
        let m = ReferenceBackend::new(12).box_segment(&img, b);
        assert_eq!(m, BinaryMask::from_fn(10, 10, |x, y| b.contains(x, y)));
    }

    #[test]
    fn unit_box_is_single_pixel() {
        let img = square_image(8, 8, 2, 2, 3);
        let b = BoxPrompt {
            x_min: 1,
            y_min: 1,
            x_max: 1,
            y_max: 1,
        };
        let res = segment_box(&ReferenceBackend::new(12), &img, b, None).unwrap();
        assert_eq!(res.mask.area(), 1);
        assert!(res.mask.get(1, 1));
    }

    #[test]
    fn box_keeps_largest_component() {
        // Two bright squares inside one box; the bigger one wins.
        let mut px = vec![0u8; 20 * 10];
        for y in 2..8 {
            for x in 2..8 {
                px[y * 20 + x] = 200;
            }
        }
        for y in 3..5 {
            for x in 12..14 {
                px[y * 20 + x] = 200;
            }
        }
        let img = Image::gray(20, 10, px).unwrap();
        let b = BoxPrompt {
            x_min: 0,
            y_min: 0,
            x_max: 15,
            y_max: 9,
        };
        // center (7, 4) is bright
        let m = ReferenceBackend::new(12).box_segment(&img, b);
        assert_eq!(m, square_mask(20, 10, 2, 2, 6));
    }

    #[test]
    fn otsu_two_tone() {
        let mut hist = [0u64; 256];
        hist[10] = 50;
        hist[200] = 30;
        let t = otsu_threshold(&hist).unwrap();
        assert!((10..200).contains(&t));
        assert_eq!(t, 10);
        hist = [0; 256];
        hist[77] = 5;
        assert_eq!(otsu_threshold(&hist), None);
    }
}
