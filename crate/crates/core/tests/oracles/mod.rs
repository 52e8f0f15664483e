//! Independent reference implementations used by the property and
//! acceptance tests. They favor obviousness over speed.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use sqa_core::{BinaryMask, Connectivity};

/// Components by breadth-first flood fill, each returned as its sorted
/// pixel list, ordered by first pixel in row-major order.
pub fn flood_components(mask: &BinaryMask, eight: bool, min_area: usize) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = mask.dims();
    let mut seen = vec![vec![false; w as usize]; h as usize];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[y as usize][x as usize] {
                continue;
            }
            let mut pixels = Vec::new();
            let mut queue = VecDeque::from([(x, y)]);
            seen[y as usize][x as usize] = true;
            while let Some((cx, cy)) = queue.pop_front() {
                pixels.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (ux, uy) = (nx as usize, ny as usize);
                        if mask.get(nx as u32, ny as u32) && !seen[uy][ux] {
                            seen[uy][ux] = true;
                            queue.push_back((nx as u32, ny as u32));
                        }
                    }
                }
            }
            if pixels.len() >= min_area {
                pixels.sort_by_key(|&(px, py)| (py, px));
                out.push(pixels);
            }
        }
    }
    out
}

pub fn pixel_list(mask: &BinaryMask) -> Vec<(u32, u32)> {
    let mut v = Vec::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                v.push((x, y));
            }
        }
    }
    v
}

/// Compares the library's components against the flood-fill oracle.
pub fn components_agree(mask: &BinaryMask, connectivity: Connectivity, min_area: usize) -> Result<(), String> {
    let got: Vec<Vec<(u32, u32)>> = sqa_core::objects::connected_components(mask, connectivity, min_area)
        .iter()
        .map(pixel_list)
        .collect();
    let want = flood_components(mask, connectivity == Connectivity::Eight, min_area);
    if got == want {
        Ok(())
    } else {
        Err(format!(
            "{}x{} {:?}-connected: got {} components, oracle {}",
            mask.width(),
            mask.height(),
            connectivity,
            got.len(),
            want.len()
        ))
    }
}

pub fn random_mask(rng: &mut impl Rng, w: u32, h: u32, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density))
}

/// Pearson correlation from the all-pairs form
/// `sum_{i<j} (x_i - x_j)(y_i - y_j)`, which avoids means altogether.
pub fn pearson_pairs(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx.sqrt() * syy.sqrt()))
    }
}

/// Average-tie ranks by counting: rank = #smaller + (#equal + 1) / 2.
pub fn counting_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson_pairs(&counting_ranks(x), &counting_ranks(y))
}

/// Bottom-k overlap with an explicit sort on (value, id).
pub fn bottom_k_oracle(ids: &[String], scores: &[f64], truths: &[f64], k: f64) -> f64 {
    let n = ids.len();
    let m = ((n as f64 * k / 100.0).floor() as usize).max(1);
    let lowest = |vals: &[f64]| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap().then(ids[a].cmp(&ids[b])));
        idx.truncate(m);
        idx
    };
    let a = lowest(truths);
    let b = lowest(scores);
    a.iter().filter(|i| b.contains(i)).count() as f64 / m as f64
}

/// Macro Dice over classes present in either map, by direct pixel counting.
pub fn dice_oracle(pred: &[BinaryMask], truth: &[BinaryMask]) -> f64 {
    let mut total = 0.0;
    let mut classes = 0;
    for (p, t) in pred.iter().zip(truth) {
        let (mut inter, mut pa, mut ta) = (0usize, 0usize, 0usize);
        for y in 0..p.height() {
            for x in 0..p.width() {
                let (a, b) = (p.get(x, y), t.get(x, y));
                inter += (a && b) as usize;
                pa += a as usize;
                ta += b as usize;
            }
        }
        if pa + ta > 0 {
            total += 2.0 * inter as f64 / (pa + ta) as f64;
            classes += 1;
        }
    }
    if classes == 0 {
        1.0
    } else {
        total / classes as f64
    }
}
