//! Fully connected autoencoder with an optional physics-consistency loss.
//!
//! Loss per batch: `recon + λ_eq · eq`, where `recon` is the mean squared
//! pixel error and `eq` the mean squared mismatch between the central
//! difference of consecutive latents and the sparse law evaluated at the
//! window centre.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectorySeries;
use crate::error::{Error, Result};
use crate::regress::{CompiledLibrary, SparseModel};
use crate::render::FrameSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub lambda_eq: f64,
    pub seed: u64,
    /// Mini-batch gradients with a larger global norm are rescaled to it; 0 disables.
    pub clip_norm: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 32], learning_rate: 0.1, epochs: 200, batch_size: 32, momentum: 0.9, lambda_eq: 0.0, seed: 0, clip_norm: 1.0 }
    }
}

impl AutoencoderConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && self.epochs >= 1
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.momentum)
            && self.lambda_eq.is_finite()
            && self.lambda_eq >= 0.0
            && self.clip_norm.is_finite()
            && self.clip_norm >= 0.0
            && self.hidden.iter().all(|&h| h > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::pre(format!("invalid autoencoder config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub recon: f64,
    pub eq: f64,
}

/// Affine layer `y = W x + b`; `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    fn xavier(inp: usize, out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (inp + out) as f64).sqrt();
        Self { weights: DMatrix::from_fn(out, inp, |_, _| rng.random_range(-a..a)), bias: DVector::zeros(out) }
    }

    fn zeros_like(&self) -> Self {
        Self { weights: DMatrix::zeros(self.weights.nrows(), self.weights.ncols()), bias: DVector::zeros(self.bias.len()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Subtracted before encoding and added back after decoding.
    pub mean_frame: Vec<f64>,
    pub config: AutoencoderConfig,
    pub loss_history: Vec<EpochLoss>,
}

/// Hidden layers use tanh; the last layer of each stack is linear.
fn forward(layers: &[Dense], input: DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input);
    for (l, layer) in layers.iter().enumerate() {
        let mut z = &layer.weights * acts.last().expect("input pushed");
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        if l + 1 < layers.len() {
            z.apply(|v| *v = v.tanh());
        }
        acts.push(z);
    }
    acts
}

/// Accumulates parameter gradients given `dL/d(output)`; returns `dL/d(input)`.
fn backward(layers: &[Dense], acts: &[DMatrix<f64>], mut delta: DMatrix<f64>, grads: &mut [Dense]) -> DMatrix<f64> {
    for l in (0..layers.len()).rev() {
        grads[l].weights += &delta * acts[l].transpose();
        grads[l].bias += delta.column_sum();
        let mut back = layers[l].weights.transpose() * &delta;
        if l > 0 {
            back.zip_apply(&acts[l], |g, a| *g *= 1.0 - a * a);
        }
        delta = back;
    }
    delta
}

/// The sparse law in a form cheap to evaluate with its Jacobian.
struct Physics {
    layout: CompiledLibrary,
    xi: Vec<Vec<f64>>,
}

impl Physics {
    fn new(model: &SparseModel, d: usize) -> Result<Self> {
        if model.state_dim != d {
            return Err(Error::pre(format!("physics model has dimension {}, latent dimension is {d}", model.state_dim)));
        }
        let layout = model.layout()?;
        if layout.custom_count() > 0 {
            return Err(Error::pre("physics model must not use operator features"));
        }
        Ok(Self { layout, xi: model.xi.clone() })
    }

    /// Returns `f(z)` and the Jacobian `∂f_j/∂z_i` (row-major `d × d`).
    fn eval(&self, z: &[f64], theta: &mut [f64], jtheta: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let d = z.len();
        self.layout.eval_row(z, &[], theta);
        self.layout.eval_jacobian(z, &[], jtheta);
        let mut f = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        for (fi, row) in self.xi.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                f[j] += c * theta[fi];
                for i in 0..d {
                    jac[j * d + i] += c * jtheta[fi * d + i];
                }
            }
        }
        (f, jac)
    }
}

struct LossEval {
    recon: f64,
    eq: f64,
    grads: Option<(Vec<Dense>, Vec<Dense>)>,
}

impl AutoencoderModel {
    fn new(input_dim: usize, latent_dim: usize, config: &AutoencoderConfig, mean_frame: Vec<f64>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut widths = vec![input_dim];
        widths.extend(&config.hidden);
        widths.push(latent_dim);
        let encoder = widths.windows(2).map(|w| Dense::xavier(w[0], w[1], &mut rng)).collect();
        let decoder = widths.iter().rev().collect::<Vec<_>>().windows(2).map(|w| Dense::xavier(*w[0], *w[1], &mut rng)).collect();
        Self { encoder, decoder, input_dim, latent_dim, mean_frame, config: config.clone(), loss_history: Vec::new() }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(&self.decoder)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All weights then biases, layer by layer (encoder first), column-major weights.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for l in self.layers() {
            p.extend(l.weights.iter());
            p.extend(l.bias.iter());
        }
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Shape(format!("{} parameters, model has {}", params.len(), self.parameter_count())));
        }
        let mut it = params.iter();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = *it.next().expect("length checked"));
        }
        Ok(())
    }

    fn centered(&self, frames: &FrameSequence) -> Result<DMatrix<f64>> {
        if frames.pixels() * frames.channel_count() != self.input_dim {
            return Err(Error::Shape(format!(
                "frames have {} values each, model expects {}",
                frames.pixels() * frames.channel_count(),
                self.input_dim
            )));
        }
        let dim = self.input_dim;
        let mut x = DMatrix::zeros(dim, frames.len());
        for (k, chunk) in frames.frames.chunks_exact(dim).enumerate() {
            for (i, (&p, m)) in chunk.iter().zip(&self.mean_frame).enumerate() {
                x[(i, k)] = p as f64 - m;
            }
        }
        Ok(x)
    }

    fn encode_matrix(&self, x: DMatrix<f64>) -> DMatrix<f64> {
        forward(&self.encoder, x).pop().expect("non-empty")
    }

    /// Loss on the given reconstruction frames and physics window centres.
    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        data: &DMatrix<f64>,
        recon_idx: &[usize],
        centers: &[usize],
        physics: Option<&Physics>,
        lambda_eq: f64,
        dt: f64,
        want_grad: bool,
    ) -> LossEval {
        let d = self.latent_dim;
        let dim = self.input_dim;
        let use_eq = physics.is_some() && !centers.is_empty();
        // Frames needed: reconstruction frames, then any window neighbours.
        let mut cols: Vec<usize> = recon_idx.to_vec();
        let mut slot = vec![usize::MAX; data.ncols()];
        for (s, &k) in cols.iter().enumerate() {
            slot[k] = s;
        }
        if use_eq {
            for &c in centers {
                for k in [c - 1, c, c + 1] {
                    if slot[k] == usize::MAX {
                        slot[k] = cols.len();
                        cols.push(k);
                    }
                }
            }
        }
        let x = data.select_columns(&cols);
        let enc_acts = forward(&self.encoder, x);
        let z = enc_acts.last().expect("non-empty");
        let nr = recon_idx.len();
        let z_r = z.columns(0, nr).into_owned();
        let dec_acts = forward(&self.decoder, z_r);
        let xhat = dec_acts.last().expect("non-empty");
        let resid = xhat - enc_acts[0].columns(0, nr);
        let recon = if nr > 0 { resid.norm_squared() / (nr * dim) as f64 } else { 0.0 };
        let mut eq = 0.0;
        let mut dz = DMatrix::zeros(d, cols.len());
        if let (true, Some(ph)) = (use_eq, physics) {
            let f = ph.layout.len();
            let (mut theta, mut jtheta) = (vec![0.0; f], vec![0.0; f * d]);
            let norm = (centers.len() * d) as f64;
            let coef = 2.0 * lambda_eq / norm;
            for &c in centers {
                let (a, m, b) = (slot[c - 1], slot[c], slot[c + 1]);
                let zc: Vec<f64> = z.column(m).iter().copied().collect();
                let (fz, jac) = ph.eval(&zc, &mut theta, &mut jtheta);
                let r: Vec<f64> = (0..d).map(|j| (z[(j, b)] - z[(j, a)]) / (2.0 * dt) - fz[j]).collect();
                eq += r.iter().map(|v| v * v).sum::<f64>();
                if want_grad && lambda_eq > 0.0 {
                    for j in 0..d {
                        dz[(j, b)] += coef * r[j] / (2.0 * dt);
                        dz[(j, a)] -= coef * r[j] / (2.0 * dt);
                    }
                    for i in 0..d {
                        let jt: f64 = (0..d).map(|j| jac[j * d + i] * r[j]).sum();
                        dz[(i, m)] -= coef * jt;
                    }
                }
            }
            eq /= norm;
        }
        let grads = want_grad.then(|| {
            let mut g_enc: Vec<Dense> = self.encoder.iter().map(Dense::zeros_like).collect();
            let mut g_dec: Vec<Dense> = self.decoder.iter().map(Dense::zeros_like).collect();
            if nr > 0 {
                let delta = resid * (2.0 / (nr * dim) as f64);
                let dz_r = backward(&self.decoder, &dec_acts, delta, &mut g_dec);
                let mut head = dz.columns_mut(0, nr);
                head += dz_r;
            }
            backward(&self.encoder, &enc_acts, dz, &mut g_enc);
            (g_enc, g_dec)
        });
        LossEval { recon, eq, grads }
    }

    /// Full-dataset loss components and the gradient of `recon + λ_eq·eq`
    /// in [`parameters`](Self::parameters) order.
    pub fn loss_and_gradient(
        &self,
        frames: &FrameSequence,
        physics: Option<&SparseModel>,
        lambda_eq: f64,
    ) -> Result<(f64, f64, Vec<f64>)> {
        let data = self.centered(frames)?;
        let ph = physics.map(|m| Physics::new(m, self.latent_dim)).transpose()?;
        let n = frames.len();
        let all: Vec<usize> = (0..n).collect();
        let centers: Vec<usize> = (1..n.saturating_sub(1)).collect();
        let ev = self.evaluate(&data, &all, &centers, ph.as_ref(), lambda_eq, frames.dt, true);
        let (ge, gd) = ev.grads.expect("requested");
        let mut g = Vec::with_capacity(self.parameter_count());
        for l in ge.iter().chain(&gd) {
            g.extend(l.weights.iter());
            g.extend(l.bias.iter());
        }
        Ok((ev.recon, ev.eq, g))
    }

    /// Full-dataset `(recon, eq)` without gradients.
    pub fn losses(&self, frames: &FrameSequence, physics: Option<&SparseModel>) -> Result<EpochLoss> {
        let data = self.centered(frames)?;
        let ph = physics.map(|m| Physics::new(m, self.latent_dim)).transpose()?;
        let n = frames.len();
        let all: Vec<usize> = (0..n).collect();
        let centers: Vec<usize> = (1..n.saturating_sub(1)).collect();
        let ev = self.evaluate(&data, &all, &centers, ph.as_ref(), 0.0, frames.dt, false);
        Ok(EpochLoss { recon: ev.recon, eq: ev.eq })
    }
}

/// Trains from a fresh Xavier initialisation.
pub fn train_autoencoder(
    frames: &FrameSequence,
    latent_dim: usize,
    cfg: &AutoencoderConfig,
    physics: Option<&SparseModel>,
) -> Result<(AutoencoderModel, TrajectorySeries)> {
    train_autoencoder_from(frames, latent_dim, cfg, physics, None)
}

/// Trains, optionally continuing from `init` (same shapes required).
pub fn train_autoencoder_from(
    frames: &FrameSequence,
    latent_dim: usize,
    cfg: &AutoencoderConfig,
    physics: Option<&SparseModel>,
    init: Option<&AutoencoderModel>,
) -> Result<(AutoencoderModel, TrajectorySeries)> {
    cfg.validate()?;
    let dim = frames.pixels() * frames.channel_count();
    if latent_dim == 0 || latent_dim >= dim {
        return Err(Error::pre(format!("latent dimension must be in 1..{dim}, got {latent_dim}")));
    }
    let ph = physics.map(|m| Physics::new(m, latent_dim)).transpose()?;
    let n = frames.len();
    let mut model = match init {
        Some(m) => {
            if m.input_dim != dim || m.latent_dim != latent_dim {
                return Err(Error::Shape("warm-start model does not match frames/latent dimension".into()));
            }
            let mut m = m.clone();
            m.config = cfg.clone();
            m.loss_history.clear();
            m
        }
        None => {
            let mut mean = vec![0.0; dim];
            for chunk in frames.frames.chunks_exact(dim) {
                for (m, &p) in mean.iter_mut().zip(chunk) {
                    *m += p as f64;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            AutoencoderModel::new(dim, latent_dim, cfg, mean)
        }
    };
    let data = model.centered(frames)?;
    let mut vel_enc: Vec<Dense> = model.encoder.iter().map(Dense::zeros_like).collect();
    let mut vel_dec: Vec<Dense> = model.decoder.iter().map(Dense::zeros_like).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let all: Vec<usize> = (0..n).collect();
    let all_centers: Vec<usize> = (1..n.saturating_sub(1)).collect();
    let mut last = EpochLoss { recon: f64::NAN, eq: f64::NAN };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let centers: Vec<usize> = batch.iter().copied().filter(|&k| k >= 1 && k + 1 < n).collect();
            let ev = model.evaluate(&data, batch, &centers, ph.as_ref(), cfg.lambda_eq, frames.dt, true);
            let (ge, gd) = ev.grads.expect("requested");
            let norm = ge.iter().chain(&gd).map(|g| g.weights.norm_squared() + g.bias.norm_squared()).sum::<f64>().sqrt();
            let lr = if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
                cfg.learning_rate * cfg.clip_norm / norm
            } else {
                cfg.learning_rate
            };
            let step = |layers: &mut [Dense], vel: &mut [Dense], grads: &[Dense]| {
                for ((p, v), g) in layers.iter_mut().zip(vel.iter_mut()).zip(grads) {
                    v.weights *= cfg.momentum;
                    v.weights -= &g.weights * lr;
                    v.bias *= cfg.momentum;
                    v.bias -= &g.bias * lr;
                    p.weights += &v.weights;
                    p.bias += &v.bias;
                }
            };
            step(&mut model.encoder, &mut vel_enc, &ge);
            step(&mut model.decoder, &mut vel_dec, &gd);
        }
        let ev = model.evaluate(&data, &all, &all_centers, ph.as_ref(), 0.0, frames.dt, false);
        if !ev.recon.is_finite() || !ev.eq.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, last_recon: last.recon, last_eq: last.eq });
        }
        last = EpochLoss { recon: ev.recon, eq: ev.eq };
        model.loss_history.push(last);
    }
    let latent = encode(&model, frames)?;
    Ok((model, latent))
}

/// `z(t) = φ(X(t))` for every frame.
pub fn encode(model: &AutoencoderModel, frames: &FrameSequence) -> Result<TrajectorySeries> {
    let z = model.encode_matrix(model.centered(frames)?);
    TrajectorySeries::uniform(0.0, frames.dt, model.latent_dim, z.as_slice().to_vec())
}

/// Decodes latent states back to frames (row-major `N × D`, unclipped).
pub fn decode(model: &AutoencoderModel, latent: &TrajectorySeries) -> Result<Vec<f64>> {
    if latent.dim() != model.latent_dim {
        return Err(Error::Shape(format!("latent dimension {} != model {}", latent.dim(), model.latent_dim)));
    }
    let z = DMatrix::from_column_slice(model.latent_dim, latent.len(), latent.states());
    let mut x = forward(&model.decoder, z).pop().expect("non-empty");
    for mut col in x.column_iter_mut() {
        for (v, m) in col.iter_mut().zip(&model.mean_frame) {
            *v += m;
        }
    }
    Ok(x.as_slice().to_vec())
}

/// Mean squared error of `decode(encode(X))` against `X`.
pub fn reconstruction_error(model: &AutoencoderModel, frames: &FrameSequence) -> Result<f64> {
    let xhat = decode(model, &encode(model, frames)?)?;
    let sum: f64 = xhat.iter().zip(&frames.frames).map(|(a, &b)| (a - b as f64).powi(2)).sum();
    Ok(sum / xhat.len() as f64)
}

/// Reconstruction error of the best constant (mean-frame) predictor.
pub fn mean_frame_baseline(frames: &FrameSequence) -> f64 {
    let dim = frames.pixels() * frames.channel_count();
    let n = frames.len();
    let mut mean = vec![0.0; dim];
    for chunk in frames.frames.chunks_exact(dim) {
        for (m, &p) in mean.iter_mut().zip(chunk) {
            *m += p as f64 / n as f64;
        }
    }
    let sum: f64 = frames.frames.chunks_exact(dim).flat_map(|c| c.iter().zip(&mean).map(|(&p, m)| (p as f64 - m).powi(2))).sum();
    sum / (n * dim) as f64
}

const WEIGHT_MAGIC: &[u8; 8] = b"VIDLAWAE";
pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightTrailer {
    config: AutoencoderConfig,
    loss_history: Vec<EpochLoss>,
}

/// Binary weight file: magic, version, input/latent dims, layer counts,
/// `(out, in)` per layer, then little-endian `f64` weights (column-major)
/// and biases in layer order, the mean frame, and a JSON trailer holding the
/// training config and loss history.
pub fn save_model(model: &AutoencoderModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHT_MAGIC);
    for v in [
        WEIGHT_FORMAT_VERSION,
        model.input_dim as u32,
        model.latent_dim as u32,
        model.encoder.len() as u32,
        model.decoder.len() as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for l in model.layers() {
        buf.extend_from_slice(&(l.weights.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.weights.ncols() as u32).to_le_bytes());
    }
    for v in model.parameters().iter().chain(&model.mean_frame) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let trailer = serde_json::to_vec(&WeightTrailer { config: model.config.clone(), loss_history: model.loss_history.clone() })?;
    buf.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
    buf.extend_from_slice(&trailer);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(&buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_model(path: &Path) -> Result<AutoencoderModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |reason: &str| Error::BadHeader { path: path.to_path_buf(), reason: reason.into() };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos + n;
        if end > bytes.len() {
            return Err(Error::Corrupt { path: path.to_path_buf(), expected: end as u64, found: bytes.len() as u64 });
        }
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(8)? != WEIGHT_MAGIC {
        return Err(bad("not an autoencoder weight file"));
    }
    let mut u32s = [0u32; 5];
    for v in u32s.iter_mut() {
        *v = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    }
    let [version, input_dim, latent_dim, n_enc, n_dec] = u32s;
    if version != WEIGHT_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { path: path.to_path_buf(), found: version, supported: WEIGHT_FORMAT_VERSION });
    }
    let mut shapes = Vec::new();
    for _ in 0..n_enc + n_dec {
        let r = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let c = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        shapes.push((r, c));
    }
    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        Ok(take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    };
    let mut layers = Vec::new();
    for &(r, c) in &shapes {
        let w = read_f64s(r * c)?;
        let b = read_f64s(r)?;
        layers.push(Dense { weights: DMatrix::from_column_slice(r, c, &w), bias: DVector::from_vec(b) });
    }
    let mean_frame = read_f64s(input_dim as usize)?;
    let tlen = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let trailer: WeightTrailer = serde_json::from_slice(take(tlen)?)?;
    let decoder = layers.split_off(n_enc as usize);
    let model = AutoencoderModel {
        encoder: layers,
        decoder,
        input_dim: input_dim as usize,
        latent_dim: latent_dim as usize,
        mean_frame,
        config: trailer.config,
        loss_history: trailer.loss_history,
    };
    let chain_ok = model.encoder.first().map(|l| l.weights.ncols()) == Some(model.input_dim)
        && model.encoder.last().map(|l| l.weights.nrows()) == Some(model.latent_dim)
        && model.decoder.first().map(|l| l.weights.ncols()) == Some(model.latent_dim)
        && model.decoder.last().map(|l| l.weights.nrows()) == Some(model.input_dim);
    if !chain_ok {
        return Err(bad("layer shapes do not chain"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{builtin_system, integrate_ode};
    use crate::regress::LibrarySpec;
    use crate::render::{render_mode_video, RenderConfig};

    fn tiny_frames() -> FrameSequence {
        // 12-pixel frames from a 2-mode oscillation.
        let traj = integrate_ode(&builtin_system("circular").unwrap(), &[1.0, 0.0], 0.1, 24).unwrap();
        let cfg = RenderConfig { width: 4, height: 3, noise_sigma: 0.01, seed: 3, ..Default::default() };
        render_mode_video(&traj, &cfg, 0.3).unwrap()
    }

    fn physics() -> SparseModel {
        let spec = LibrarySpec { poly_degree: 3, ..Default::default() };
        let names = vec!["z1".to_string(), "z2".to_string()];
        let terms = vec![vec![("z2".into(), -0.8), ("z1^2*z2".into(), 0.3)], vec![("z1".into(), 0.9), ("z2^3".into(), -0.2)]];
        SparseModel::from_terms(&spec, &names, &terms).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let frames = tiny_frames();
        let cfg = AutoencoderConfig { hidden: vec![5], seed: 7, ..Default::default() };
        let dim = 12;
        let mut model = AutoencoderModel::new(dim, 2, &cfg, vec![0.5; dim]);
        let ph = physics();
        for lambda in [0.0, 0.7] {
            let (_, _, grad) = model.loss_and_gradient(&frames, Some(&ph), lambda).unwrap();
            let p0 = model.parameters();
            let h = 1e-5;
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] = p0[i] + h;
                model.set_parameters(&p).unwrap();
                let a = model.losses(&frames, Some(&ph)).unwrap();
                p[i] = p0[i] - h;
                model.set_parameters(&p).unwrap();
                let b = model.losses(&frames, Some(&ph)).unwrap();
                let num = ((a.recon + lambda * a.eq) - (b.recon + lambda * b.eq)) / (2.0 * h);
                let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-7);
                assert!(rel < 1e-4, "param {i}: analytic {} numeric {num}", grad[i]);
            }
            model.set_parameters(&p0).unwrap();
        }
    }

    #[test]
    fn training_records_consistent_losses() {
        let frames = tiny_frames();
        let cfg = AutoencoderConfig { hidden: vec![8], epochs: 30, learning_rate: 5e-3, batch_size: 8, seed: 1, ..Default::default() };
        let (model, latent) = train_autoencoder(&frames, 2, &cfg, None).unwrap();
        assert_eq!(model.loss_history.len(), 30);
        assert_eq!(latent.dim(), 2);
        assert_eq!(encode(&model, &frames).unwrap(), latent);
        let recon = reconstruction_error(&model, &frames).unwrap();
        assert!((recon - model.loss_history.last().unwrap().recon).abs() < 1e-10);
        assert!(train_autoencoder(&frames, 12, &cfg, None).is_err());
    }

    #[test]
    fn weight_file_round_trip() {
        let frames = tiny_frames();
        let cfg = AutoencoderConfig { hidden: vec![6, 4], epochs: 3, seed: 2, ..Default::default() };
        let (model, _) = train_autoencoder(&frames, 2, &cfg, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ae.bin");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Corrupt { .. })));
    }
}
