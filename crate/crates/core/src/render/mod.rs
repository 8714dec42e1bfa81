//! Rasterizing trajectories and fields into grayscale frame sequences.

mod container;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use container::{export_png_dir, load_sequence, save_sequence, FORMAT_VERSION, MAGIC};

use crate::dynamics::{Channel, FieldSeries, Grid, TrajectorySeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub name: String,
    /// Physical `(lo, hi)` mapped onto intensities `[0, 1]`.
    #[serde(default)]
    pub value_range: Option<(f64, f64)>,
}

/// Free-form provenance stored alongside the frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub source: String,
    #[serde(default)]
    pub kind: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub channels: Vec<ChannelMeta>,
    #[serde(default)]
    pub world_window: Option<(f64, f64, f64, f64)>,
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub ball_radius: Option<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub clipped: bool,
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// `frames × channels × height × width` intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub width: usize,
    pub height: usize,
    pub dt: f64,
    pub frames: Vec<f32>,
    pub meta: SequenceMeta,
}

impl FrameSequence {
    pub fn new(width: usize, height: usize, dt: f64, frames: Vec<f32>, meta: SequenceMeta) -> Result<Self> {
        let c = meta.channels.len().max(1);
        let px = width * height * c;
        if px == 0 || frames.len() % px != 0 {
            return Err(Error::Shape(format!("{} intensities for {width}x{height}x{c} frames", frames.len())));
        }
        if frames.len() / px < 2 {
            return Err(Error::pre("a frame sequence needs at least 2 frames"));
        }
        if !(dt > 0.0) {
            return Err(Error::pre("frame dt must be positive"));
        }
        if frames.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::pre("intensities must lie in [0, 1]"));
        }
        Ok(Self { width, height, dt, frames, meta })
    }

    pub fn channel_count(&self) -> usize {
        self.meta.channels.len().max(1)
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.frames.len() / (self.pixels() * self.channel_count())
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// One channel of frame `k`.
    pub fn frame(&self, k: usize, channel: usize) -> &[f32] {
        let px = self.pixels();
        let start = (k * self.channel_count() + channel) * px;
        &self.frames[start..start + px]
    }

    /// Inverts field renders back to physical values using the recorded ranges.
    pub fn to_field_series(&self) -> Result<FieldSeries> {
        let grid = self.meta.grid.unwrap_or(Grid { height: self.height, width: self.width, dx: 1.0, dy: 1.0 });
        let n = self.len();
        let mut channels = Vec::with_capacity(self.channel_count());
        for (c, cm) in self.meta.channels.iter().enumerate() {
            let (lo, hi) = cm
                .value_range
                .ok_or_else(|| Error::pre(format!("channel `{}` carries no value range", cm.name)))?;
            let mut data = Vec::with_capacity(n * self.pixels());
            for k in 0..n {
                data.extend(self.frame(k, c).iter().map(|&p| lo + (hi - lo) * p as f64));
            }
            channels.push(Channel { name: cm.name.clone(), data });
        }
        FieldSeries::new(0.0, self.dt, grid, channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// `(x_min, x_max, y_min, y_max)`; derived from the trajectory when absent.
    pub world_window: Option<(f64, f64, f64, f64)>,
    pub ball_radius: f64,
    pub background: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { width: 64, height: 64, world_window: None, ball_radius: 3.0, background: 0.0, noise_sigma: 0.0, seed: 0 }
    }
}

impl RenderConfig {
    fn validate(&self) -> Result<()> {
        if self.ball_radius < 2.0 {
            return Err(Error::pre("ball radius must be at least 2 px"));
        }
        if let Some((x0, x1, y0, y1)) = self.world_window {
            if !(x0 < x1 && y0 < y1) {
                return Err(Error::pre("world window must be strictly ordered"));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::pre("noise sigma must be non-negative"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::pre("canvas must be non-empty"));
        }
        Ok(())
    }
}

/// Square window around the trajectory's bounding box with a relative margin.
pub fn fit_window(traj: &TrajectorySeries, dims: (usize, usize), margin: f64) -> (f64, f64, f64, f64) {
    let xs = traj.column(dims.0);
    let ys = traj.column(dims.1);
    let (lo_x, hi_x) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo_y, hi_y) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let half = 0.5 * (hi_x - lo_x).max(hi_y - lo_y).max(1e-6) * (1.0 + 2.0 * margin);
    let (cx, cy) = (0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y));
    (cx - half, cx + half, cy - half, cy + half)
}

/// Continuous pixel coordinates (pixel `j` spans `[j, j+1)`) of a world point; `y` points up.
pub fn world_to_pixel(window: (f64, f64, f64, f64), width: usize, height: usize, x: f64, y: f64) -> (f64, f64) {
    let (x0, x1, y0, y1) = window;
    ((x - x0) / (x1 - x0) * width as f64, (y1 - y) / (y1 - y0) * height as f64)
}

pub fn pixel_to_world(window: (f64, f64, f64, f64), width: usize, height: usize, px: f64, py: f64) -> (f64, f64) {
    let (x0, x1, y0, y1) = window;
    (x0 + px / width as f64 * (x1 - x0), y1 - py / height as f64 * (y1 - y0))
}

/// Anti-aliased disc: coverage falls linearly across a one-pixel band at the rim.
fn draw_disc(buf: &mut [f64], width: usize, height: usize, cx: f64, cy: f64, radius: f64, intensity: f64) {
    let reach = radius + 1.0;
    let i0 = (cy - reach).floor().max(0.0) as usize;
    let i1 = ((cy + reach).ceil().max(0.0) as usize).min(height);
    let j0 = (cx - reach).floor().max(0.0) as usize;
    let j1 = ((cx + reach).ceil().max(0.0) as usize).min(width);
    for i in i0..i1 {
        for j in j0..j1 {
            let d = (j as f64 + 0.5 - cx).hypot(i as f64 + 0.5 - cy);
            let cover = (radius + 0.5 - d).clamp(0.0, 1.0);
            if cover > 0.0 {
                let p = &mut buf[i * width + j];
                *p += (intensity - *p) * cover;
            }
        }
    }
}

fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64);
    rng
}

fn add_noise(buf: &mut [f64], sigma: f64, seed: u64, frame: usize) {
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma validated");
        let mut rng = frame_rng(seed, frame);
        for p in buf.iter_mut() {
            *p += normal.sample(&mut rng);
        }
    }
}

fn finish(buf: Vec<f64>) -> Vec<f32> {
    buf.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect()
}

/// Draws the `dims` slice of each state as a filled disc on a plain background.
pub fn render_object_video(traj: &TrajectorySeries, dims: (usize, usize), cfg: &RenderConfig) -> Result<FrameSequence> {
    render_objects(&[traj], dims, cfg)
}

/// Renders several independently moving discs (e.g. a static distractor plus a mover).
pub fn render_objects(trajs: &[&TrajectorySeries], dims: (usize, usize), cfg: &RenderConfig) -> Result<FrameSequence> {
    cfg.validate()?;
    let first = trajs.first().ok_or_else(|| Error::pre("no trajectory to render"))?;
    if trajs.iter().any(|t| t.len() != first.len()) {
        return Err(Error::Shape("trajectories differ in length".into()));
    }
    if dims.0 >= first.dim() || dims.1 >= first.dim() {
        return Err(Error::pre(format!("position slice {dims:?} outside state dimension {}", first.dim())));
    }
    let window = cfg.world_window.unwrap_or_else(|| fit_window(first, dims, 0.15));
    let (w, h) = (cfg.width, cfg.height);
    let clipped = trajs.iter().any(|t| {
        t.rows().any(|r| {
            let (x, y) = (r[dims.0], r[dims.1]);
            x < window.0 || x > window.1 || y < window.2 || y > window.3
        })
    });
    let frames: Vec<Vec<f32>> = (0..first.len())
        .into_par_iter()
        .map(|k| {
            let mut buf = vec![cfg.background; w * h];
            for t in trajs {
                let r = t.row(k);
                let (x, y) = (r[dims.0].clamp(window.0, window.1), r[dims.1].clamp(window.2, window.3));
                let (px, py) = world_to_pixel(window, w, h, x, y);
                draw_disc(&mut buf, w, h, px, py, cfg.ball_radius, 1.0);
            }
            add_noise(&mut buf, cfg.noise_sigma, cfg.seed, k);
            finish(buf)
        })
        .collect();
    let meta = SequenceMeta {
        source: String::new(),
        kind: "object".into(),
        seed: Some(cfg.seed),
        channels: vec![ChannelMeta { name: "intensity".into(), value_range: None }],
        world_window: Some(window),
        background: cfg.background,
        ball_radius: Some(cfg.ball_radius),
        noise_sigma: cfg.noise_sigma,
        clipped,
        grid: None,
        extra: Default::default(),
    };
    FrameSequence::new(w, h, first.dt(), frames.concat(), meta)
}

/// Superimposes one fixed spatial pattern per state dimension, scaled by the
/// state, on a mid-grey background: a video whose intrinsic dimension equals
/// the trajectory's.
pub fn render_mode_video(traj: &TrajectorySeries, cfg: &RenderConfig, amplitude: f64) -> Result<FrameSequence> {
    if !(cfg.noise_sigma >= 0.0) || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::pre("invalid canvas or noise"));
    }
    let (w, h) = (cfg.width, cfg.height);
    let d = traj.dim();
    let modes: Vec<Vec<f64>> = (0..d)
        .map(|m| {
            let (fx, fy) = ((m % 2 + 1) as f64, ((m + 1) % 2 + 1 + m / 2) as f64);
            let mut v = vec![0.0; w * h];
            for i in 0..h {
                for j in 0..w {
                    let x = (j as f64 + 0.5) / w as f64;
                    let y = (i as f64 + 0.5) / h as f64;
                    v[i * w + j] = (std::f64::consts::PI * fx * x).sin() * (std::f64::consts::PI * fy * y).sin();
                }
            }
            v
        })
        .collect();
    let zmax = traj.states().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let scale = amplitude / (zmax * d as f64);
    let frames: Vec<Vec<f32>> = (0..traj.len())
        .into_par_iter()
        .map(|k| {
            let r = traj.row(k);
            let mut buf = vec![0.5; w * h];
            for (m, mode) in modes.iter().enumerate() {
                for (p, v) in buf.iter_mut().zip(mode) {
                    *p += scale * r[m] * v;
                }
            }
            add_noise(&mut buf, cfg.noise_sigma, cfg.seed, k);
            finish(buf)
        })
        .collect();
    let mut extra = serde_json::Map::new();
    extra.insert("mode_scale".into(), serde_json::json!(scale));
    let meta = SequenceMeta {
        source: String::new(),
        kind: "modes".into(),
        seed: Some(cfg.seed),
        channels: vec![ChannelMeta { name: "intensity".into(), value_range: None }],
        background: 0.5,
        noise_sigma: cfg.noise_sigma,
        extra,
        ..Default::default()
    };
    FrameSequence::new(w, h, traj.dt(), frames.concat(), meta)
}

/// Maps one field channel affinely from `value_range` onto `[0, 1]`.
pub fn render_field_video(fields: &FieldSeries, channel: &str, value_range: (f64, f64)) -> Result<FrameSequence> {
    render_fields_video(fields, &[(channel.to_string(), value_range)])
}

/// Multi-channel variant of [`render_field_video`].
pub fn render_fields_video(fields: &FieldSeries, channels: &[(String, (f64, f64))]) -> Result<FrameSequence> {
    let n = fields.len();
    let cells = fields.grid.cells();
    let mut idx = Vec::new();
    for (name, (lo, hi)) in channels {
        if !(lo < hi) {
            return Err(Error::pre(format!("value range for `{name}` must satisfy lo < hi")));
        }
        idx.push(fields.channel_index(name).ok_or_else(|| Error::pre(format!("no channel `{name}`")))?);
    }
    let mut frames = Vec::with_capacity(n * channels.len() * cells);
    for k in 0..n {
        for (c, (_, (lo, hi))) in idx.iter().zip(channels) {
            frames.extend(fields.frame(*c, k).iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0) as f32));
        }
    }
    let meta = SequenceMeta {
        source: String::new(),
        kind: "field".into(),
        channels: channels
            .iter()
            .map(|(name, r)| ChannelMeta { name: name.clone(), value_range: Some(*r) })
            .collect(),
        grid: Some(fields.grid),
        ..Default::default()
    };
    FrameSequence::new(fields.grid.width, fields.grid.height, fields.dt, frames, meta)
}

/// Per-channel `(min, max)` of a field widened by `margin` of the span.
pub fn auto_ranges(fields: &FieldSeries, margin: f64) -> Vec<(String, (f64, f64))> {
    fields
        .channels
        .iter()
        .map(|c| {
            let (lo, hi) = c.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let pad = ((hi - lo) * margin).max(1e-6);
            (c.name.clone(), (lo - pad, hi + pad))
        })
        .collect()
}
