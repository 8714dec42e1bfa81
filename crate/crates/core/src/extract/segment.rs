use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Sub-pixel `(x, y)`; pixel `j` spans `[j, j+1)`.
    pub centroid: (f64, f64),
    /// Pixel count of the thresholded component.
    pub area: usize,
    pub mean_intensity: f64,
}

/// Pixels within this distance of a component join its centroid, so that
/// anti-aliased rims below the threshold still contribute.
const RIM: isize = 2;

/// Thresholds `|p - background|`, labels 8-connected components and returns
/// those with at least `min_area` pixels, largest first (ties by `(y, x)`).
pub fn segment_frame(
    frame: &[f32],
    width: usize,
    height: usize,
    background: f64,
    threshold: f64,
    min_area: usize,
) -> Result<Vec<Blob>> {
    if frame.len() != width * height {
        return Err(Error::Shape(format!("frame has {} pixels, expected {width}x{height}", frame.len())));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::pre(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if min_area < 1 {
        return Err(Error::pre("min_area must be >= 1"));
    }
    let weight: Vec<f64> = frame.iter().map(|&p| (p as f64 - background).abs()).collect();
    let mut label = vec![usize::MAX; frame.len()];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..frame.len() {
        if weight[start] <= threshold || label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut pixels = Vec::new();
        label[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (i, j) = ((p / width) as isize, (p % width) as isize);
            for di in -1..=1 {
                for dj in -1..=1 {
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= height as isize || nj >= width as isize {
                        continue;
                    }
                    let q = ni as usize * width + nj as usize;
                    if weight[q] > threshold && label[q] == usize::MAX {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        components.push(pixels);
    }
    let mut blobs = Vec::new();
    let mut seen = vec![usize::MAX; frame.len()];
    for (id, pixels) in components.iter().enumerate() {
        if pixels.len() < min_area {
            continue;
        }
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for &p in pixels {
            let (i, j) = ((p / width) as isize, (p % width) as isize);
            for di in -RIM..=RIM {
                for dj in -RIM..=RIM {
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= height as isize || nj >= width as isize {
                        continue;
                    }
                    let q = ni as usize * width + nj as usize;
                    if seen[q] == id || (label[q] != usize::MAX && label[q] != id) {
                        continue;
                    }
                    seen[q] = id;
                    let w = weight[q];
                    sw += w;
                    sx += w * (nj as f64 + 0.5);
                    sy += w * (ni as f64 + 0.5);
                }
            }
        }
        let mean_intensity = pixels.iter().map(|&p| frame[p] as f64).sum::<f64>() / pixels.len() as f64;
        blobs.push(Blob { centroid: (sx / sw, sy / sw), area: pixels.len(), mean_intensity });
    }
    blobs.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.centroid.1.total_cmp(&b.centroid.1))
            .then(a.centroid.0.total_cmp(&b.centroid.0))
    });
    Ok(blobs)
}

/// Refines a disc centre by least-squares fitting an anti-aliased disc
/// `background + a * clamp(r + 0.5 - |p - c|, 0, 1)` around `blob`.
/// Pixels closer to any centre in `others` are ignored. Returns `None` when
/// the fit does not converge to a plausible disc.
pub fn refine_disc(
    frame: &[f32],
    width: usize,
    height: usize,
    background: f64,
    blob: &Blob,
    others: &[(f64, f64)],
) -> Option<(f64, f64)> {
    let (mut cx, mut cy) = blob.centroid;
    let mut r = (blob.area as f64 / std::f64::consts::PI).sqrt().max(1.0);
    let mut a = blob.mean_intensity - background;
    if a.abs() < 1e-6 {
        return None;
    }
    let half = (r + 3.0).ceil() as isize;
    let (ci, cj) = (cy.floor() as isize, cx.floor() as isize);
    let mut pix = Vec::new();
    for i in (ci - half).max(0)..=(ci + half).min(height as isize - 1) {
        for j in (cj - half).max(0)..=(cj + half).min(width as isize - 1) {
            let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
            let own = (x - cx).hypot(y - cy);
            if others.iter().any(|&(ox, oy)| (x - ox).hypot(y - oy) < own) {
                continue;
            }
            pix.push((x, y, frame[i as usize * width + j as usize] as f64 - background));
        }
    }
    for _ in 0..30 {
        let mut jtj = nalgebra::Matrix4::<f64>::zeros();
        let mut jtr = nalgebra::Vector4::<f64>::zeros();
        for &(x, y, v) in &pix {
            let d = (x - cx).hypot(y - cy).max(1e-9);
            let raw = r + 0.5 - d;
            let c = raw.clamp(0.0, 1.0);
            let g = if raw > 0.0 && raw < 1.0 {
                nalgebra::Vector4::new(a * (x - cx) / d, a * (y - cy) / d, a, c)
            } else {
                nalgebra::Vector4::new(0.0, 0.0, 0.0, c)
            };
            jtj += g * g.transpose();
            jtr += g * (v - a * c);
        }
        let step = jtj.try_inverse()? * jtr;
        cx += step[0];
        cy += step[1];
        r += step[2];
        a += step[3];
        if !(r > 0.5) || (cx, cy) != (cx, cy) {
            return None;
        }
        if step.iter().take(3).all(|s| s.abs() < 1e-9) {
            break;
        }
    }
    let drift = (cx - blob.centroid.0).hypot(cy - blob.centroid.1);
    (drift < 1.0).then_some((cx, cy))
}
