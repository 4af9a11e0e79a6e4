use super::{Point, SaliencyMap};
use crate::error::{Error, Result};

pub const MIN_FIXATIONS: usize = 5;
pub const MAX_FIXATIONS: usize = 10;

/// Suppression radius: 16 px on a 256-wide map, proportional otherwise.
pub fn nms_radius(width: usize) -> f64 {
    16.0 * width as f64 / 256.0
}

/// Local maxima over the 8-neighbourhood. On equal values the pixel earlier in
/// raster order wins. Only strictly positive values qualify.
fn local_maxima(map: &SaliencyMap) -> Vec<(f64, usize)> {
    let (w, h) = (map.width(), map.height());
    let v = map.values();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if v[i] <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if v[j] > v[i] || (v[j] == v[i] && j < i) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                out.push((v[i], i));
            }
        }
    }
    // Highest value first, raster order among equals.
    out.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    out
}

/// Peak locations of an attention map, best first.
///
/// Candidates at or above a threshold (starting at half the maximum) are
/// accepted greedily unless closer than [`nms_radius`] to an accepted point,
/// up to [`MAX_FIXATIONS`]. While fewer than [`MIN_FIXATIONS`] are found and
/// some local maximum is still below the threshold, the threshold halves.
pub fn extract_fixations(map: &SaliencyMap) -> Result<Vec<Point>> {
    let peak = map.max_value();
    if !(peak > 0.0) {
        return Err(Error::degenerate("extract_fixations", "map has no positive value"));
    }
    let candidates = local_maxima(map);
    let radius2 = nms_radius(map.width()).powi(2);
    let w = map.width();
    let mut threshold = 0.5 * peak;
    loop {
        let mut kept: Vec<Point> = Vec::new();
        for &(value, i) in &candidates {
            if value < threshold || kept.len() == MAX_FIXATIONS {
                break;
            }
            let p = Point::new(i % w, i / w);
            let clear = kept.iter().all(|q| {
                let (dx, dy) = (p.x as f64 - q.x as f64, p.y as f64 - q.y as f64);
                dx * dx + dy * dy >= radius2
            });
            if clear {
                kept.push(p);
            }
        }
        let exhausted = candidates.last().is_none_or(|&(v, _)| v >= threshold);
        if kept.len() >= MIN_FIXATIONS || exhausted {
            return Ok(kept);
        }
        threshold *= 0.5;
    }
}
