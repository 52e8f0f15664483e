//! Binary morphology and distance helpers for the degradation generator.

use std::collections::VecDeque;

use crate::raster::BinaryMask;

/// Offsets of a Euclidean disk: `dx² + dy² <= r²`.
pub fn disk(radius: u32) -> Vec<(i64, i64)> {
    let r = i64::from(radius);
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Erosion by a disk; pixels outside the raster count as background.
pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let se = disk(radius);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        mask.get(x, y)
            && se
                .iter()
                .all(|&(dx, dy)| mask.get_signed(i64::from(x) + dx, i64::from(y) + dy))
    })
}

/// Dilation by a disk, clipped to the raster.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let se = disk(radius);
    let mut out = BinaryMask::empty(mask.width(), mask.height());
    for (x, y) in mask.pixels() {
        for &(dx, dy) in &se {
            let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
            if nx >= 0 && ny >= 0 && nx < i64::from(mask.width()) && ny < i64::from(mask.height()) {
                out.set(nx as u32, ny as u32, true);
            }
        }
    }
    out
}

/// Shifts every pixel by `(dx, dy)`; pixels leaving the raster are lost.
pub fn translate(mask: &BinaryMask, dx: i64, dy: i64) -> BinaryMask {
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        mask.get_signed(i64::from(x) - dx, i64::from(y) - dy)
    })
}

/// Chessboard distance from every pixel to the nearest pixel of `sources`;
/// `u32::MAX` everywhere when `sources` is empty.
pub fn chessboard_distance(sources: &BinaryMask) -> Vec<u32> {
    let (w, h) = sources.dims();
    let mut dist = vec![u32::MAX; w as usize * h as usize];
    let mut queue = VecDeque::new();
    for (x, y) in sources.pixels() {
        dist[sources.index(x, y)] = 0;
        queue.push_back((x, y));
    }
    while let Some((x, y)) = queue.pop_front() {
        let d = dist[sources.index(x, y)];
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                if nx < 0 || ny < 0 || nx >= i64::from(w) || ny >= i64::from(h) {
                    continue;
                }
                let idx = ny as usize * w as usize + nx as usize;
                if dist[idx] == u32::MAX {
                    dist[idx] = d + 1;
                    queue.push_back((nx as u32, ny as u32));
                }
            }
        }
    }
    dist
}

/// Euclidean signed distance clipped to `cap`: inside pixels get the
/// distance to the nearest outside pixel (>= 1), outside pixels minus the
/// distance to the nearest inside pixel (<= -1). The raster border counts as
/// outside.
pub fn signed_distance(mask: &BinaryMask, cap: u32) -> Vec<f64> {
    let (w, h) = mask.dims();
    let c = i64::from(cap);
    let mut out = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        for x in 0..w {
            let inside = mask.get(x, y);
            let mut best = f64::from(cap) + 1.0;
            for dy in -c..=c {
                for dx in -c..=c {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if mask.get_signed(i64::from(x) + dx, i64::from(y) + dy) != inside {
                        let d = ((dx * dx + dy * dy) as f64).sqrt();
                        if d < best {
                            best = d;
                        }
                    }
                }
            }
            out.push(if inside { best } else { -best });
        }
    }
    out
}

/// Pixels of `mask` with a 4-neighbour outside it.
pub fn inner_boundary(mask: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        mask.get(x, y)
            && [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|&(dx, dy)| !mask.get_signed(i64::from(x) + dx, i64::from(y) + dy))
    })
}
