use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::segment::{refine_disc, segment_frame, Blob};
use crate::dynamics::TrajectorySeries;
use crate::error::{Error, Result};
use crate::render::{pixel_to_world, FrameSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    pub threshold: f64,
    pub min_area: usize,
    /// Tracks whose centroid never strays this many pixels from its first position are static.
    pub static_eps: f64,
    pub match_radius: f64,
    /// Defaults to the background recorded with the sequence.
    pub background: Option<f64>,
    /// Convert to world units when the sequence records its render window.
    pub world_units: bool,
    /// Fit an anti-aliased disc to each blob for a sub-pixel centre.
    pub refine: bool,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self { threshold: 0.3, min_area: 4, static_eps: 2.0, match_radius: 8.0, background: None, world_units: true, refine: true }
    }
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub series: TrajectorySeries,
    pub in_world_units: bool,
    pub tracks: usize,
    pub static_dropped: usize,
}

/// Segments every frame, links blobs by nearest neighbour, drops static
/// tracks and returns the single moving object's centroid trajectory.
pub fn track_and_filter(frames: &FrameSequence, cfg: &TrackConfig) -> Result<TrackResult> {
    if frames.len() < 2 {
        return Err(Error::pre("tracking needs at least 2 frames"));
    }
    if !(cfg.match_radius > 0.0) || !(cfg.static_eps >= 0.0) {
        return Err(Error::pre("match_radius must be > 0 and static_eps >= 0"));
    }
    let (w, h) = (frames.width, frames.height);
    let bg = cfg.background.unwrap_or(frames.meta.background);
    let blobs: Vec<Vec<Blob>> = (0..frames.len())
        .into_par_iter()
        .map(|k| {
            let frame = frames.frame(k, 0);
            let mut found = segment_frame(frame, w, h, bg, cfg.threshold, cfg.min_area)?;
            if cfg.refine {
                let centres: Vec<(f64, f64)> = found.iter().map(|b| b.centroid).collect();
                for (i, b) in found.iter_mut().enumerate() {
                    let others: Vec<(f64, f64)> =
                        centres.iter().enumerate().filter(|&(o, _)| o != i).map(|(_, &c)| c).collect();
                    if let Some(c) = refine_disc(frame, w, h, bg, b, &others) {
                        b.centroid = c;
                    }
                }
            }
            Ok(found)
        })
        .collect::<Result<_>>()?;
    let mut tracks: Vec<Vec<(f64, f64)>> = blobs[0].iter().map(|b| vec![b.centroid]).collect();
    if tracks.is_empty() {
        return Err(Error::NoDynamics);
    }
    let r2 = cfg.match_radius * cfg.match_radius;
    for (k, frame_blobs) in blobs.iter().enumerate().skip(1) {
        let mut taken = vec![false; frame_blobs.len()];
        for track in tracks.iter_mut() {
            let (x, y) = *track.last().expect("tracks are non-empty");
            let near: Vec<usize> = frame_blobs
                .iter()
                .enumerate()
                .filter(|(_, b)| (b.centroid.0 - x).powi(2) + (b.centroid.1 - y).powi(2) <= r2)
                .map(|(i, _)| i)
                .collect();
            match near.as_slice() {
                [] => return Err(Error::TrackLost { frame: k }),
                [i] if !taken[*i] => {
                    taken[*i] = true;
                    track.push(frame_blobs[*i].centroid);
                }
                [_] => return Err(Error::AmbiguousAssociation { frame: k, count: 2 }),
                many => return Err(Error::AmbiguousAssociation { frame: k, count: many.len() }),
            }
        }
    }
    let total = tracks.len();
    let moving: Vec<Vec<(f64, f64)>> = tracks
        .into_iter()
        .filter(|t| {
            let (x0, y0) = t[0];
            t.iter().map(|(x, y)| (x - x0).hypot(y - y0)).fold(0.0, f64::max) >= cfg.static_eps
        })
        .collect();
    let track = match moving.len() {
        0 => return Err(Error::NoDynamics),
        1 => &moving[0],
        n => return Err(Error::MultipleMovingObjects(n)),
    };
    let window = frames.meta.world_window.filter(|_| cfg.world_units);
    let states: Vec<f64> = track
        .iter()
        .flat_map(|&(px, py)| match window {
            Some(win) => {
                let (x, y) = pixel_to_world(win, w, h, px, py);
                [x, y]
            }
            None => [px, py],
        })
        .collect();
    Ok(TrackResult {
        series: TrajectorySeries::uniform(0.0, frames.dt, 2, states)?,
        in_world_units: window.is_some(),
        tracks: total,
        static_dropped: total - 1,
    })
}
