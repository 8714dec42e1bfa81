//! Fit and score functions shared by discovery runs and standalone evaluation,
//! so both paths produce identical numbers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{operator_kind, ExtractConfig, RegressConfig};
use crate::dynamics::{FieldSeries, TrajectorySeries};
use crate::error::{Error, Result};
use crate::evaluate::{extrapolate, extrapolate_field, r2_score, r2_trajectory, rmse, rmse_fields, vps, vps_fields};
use crate::extract::{apply_stencils, sample_pixels};
use crate::regress::{build_library, central_difference, interior_states, stlsq, CandidateLibrary, LibrarySpec, SparseModel};

/// Sample ranges for training and extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// Training uses samples `0..=train_end`.
    pub train_end: usize,
    /// Extrapolation starts from the observed state at `start`.
    pub start: usize,
    pub horizon: usize,
}

impl Window {
    /// Extrapolation follows the training window when samples remain after
    /// it; otherwise it replays from the first sample.
    pub fn new(len: usize, train_steps: Option<usize>, horizon: usize) -> Result<Self> {
        if len < 4 {
            return Err(Error::pre(format!("need at least 4 samples, got {len}")));
        }
        if horizon == 0 {
            return Err(Error::pre("horizon must be at least 1"));
        }
        let last = len - 1;
        let train_end = train_steps.map_or(last, |t| t.min(last));
        if train_end < 3 {
            return Err(Error::pre(format!("training window of {} samples is too short", train_end + 1)));
        }
        let (start, horizon) =
            if train_end < last { (train_end, horizon.min(last - train_end)) } else { (0, horizon.min(last)) };
        Ok(Self { train_end, start, horizon })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Derivative fit on the training window.
    #[serde(with = "crate::evaluate::json_f64")]
    pub r2: f64,
    #[serde(with = "crate::evaluate::json_f64")]
    pub r2_extrapolation: f64,
    #[serde(with = "crate::evaluate::json_f64")]
    pub rmse: f64,
    pub vps: usize,
    pub horizon: usize,
    pub divergence_step: Option<usize>,
    pub l0: usize,
}

fn predicted(lib: &CandidateLibrary, model: &SparseModel) -> DMatrix<f64> {
    let xi = DMatrix::from_fn(model.names.len(), model.state_dim, |f, j| model.xi[f][j]);
    &lib.matrix * xi
}

fn check_layout(lib: &CandidateLibrary, model: &SparseModel) -> Result<()> {
    if lib.names() != model.names.as_slice() {
        return Err(Error::Shape("model features do not match the rebuilt library".into()));
    }
    Ok(())
}

fn trajectory_regression(series: &TrajectorySeries, names: &[String], spec: &LibrarySpec, w: &Window) -> Result<(CandidateLibrary, DMatrix<f64>)> {
    let train = series.slice(0, w.train_end + 1)?;
    let der = central_difference(&train)?;
    let lib = build_library(&interior_states(&train), names, spec, None)?;
    Ok((lib, der.values))
}

/// Regresses a sparse law on the training window of a trajectory.
pub fn fit_trajectory(
    series: &TrajectorySeries,
    names: &[String],
    w: &Window,
    spec: &LibrarySpec,
    lambda_sp: f64,
    regress: &RegressConfig,
) -> Result<SparseModel> {
    let (lib, dz) = trajectory_regression(series, names, spec, w)?;
    stlsq(&lib, &dz, lambda_sp, regress.max_iter)
}

/// Derivative-fit R², extrapolation R², RMSE and VPS of `model` against `series`.
/// Returns the metrics, the prediction and the matching observed window.
pub fn score_trajectory(
    model: &SparseModel,
    series: &TrajectorySeries,
    w: &Window,
    vps_eps: f64,
) -> Result<(Metrics, TrajectorySeries, TrajectorySeries)> {
    if model.state_dim != series.dim() {
        return Err(Error::Shape(format!("model has {} states, data has {}", model.state_dim, series.dim())));
    }
    let (lib, dz) = trajectory_regression(series, &model.state_names, &model.library_spec, w)?;
    check_layout(&lib, model)?;
    let r2 = r2_score(&dz, &predicted(&lib, model))?;
    let truth = series.slice(w.start, w.start + w.horizon + 1)?;
    let raw = extrapolate(model, series.row(w.start), series.dt(), w.horizon)?;
    let pred = TrajectorySeries::uniform(truth.times()[0], series.dt(), raw.dim(), raw.states().to_vec())?
        .with_divergence(raw.divergence());
    let err = rmse(&pred, &truth)?;
    let metrics = Metrics {
        r2,
        r2_extrapolation: r2_trajectory(&pred, &truth)?,
        rmse: err.value,
        vps: vps(&pred, &truth, vps_eps)?,
        horizon: w.horizon,
        divergence_step: pred.divergence(),
        l0: model.complexity(),
    };
    Ok((metrics, pred, truth))
}

/// Operator feature names for every channel, grouped by operator.
pub fn operator_features(operators: &[String], channels: &[String]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for op in operators {
        let kind = operator_kind(op)?;
        out.extend(channels.iter().map(|c| kind.feature_name(c)));
    }
    Ok(out)
}

fn field_regression(fields: &FieldSeries, spec: &LibrarySpec, w: &Window, ex: &ExtractConfig) -> Result<(CandidateLibrary, DMatrix<f64>)> {
    let train = fields.slice(0, w.train_end + 1)?;
    let channels = train.channel_names();
    let mut requested = channels.clone();
    requested.extend(spec.custom.iter().cloned());
    let tensors = apply_stencils(&train, &requested)?;
    let n = ex.n_samples.min(
        (fields.grid.height.saturating_sub(2 * ex.skip_boundary)) * (fields.grid.width.saturating_sub(2 * ex.skip_boundary)),
    );
    let sampled = sample_pixels(&tensors, n, ex.sample_seed, ex.skip_boundary)?;
    let (z, custom, dz) = sampled.regression_data(&channels, &spec.custom)?;
    let lib = build_library(&z, &channels, spec, Some(&custom))?;
    Ok((lib, dz))
}

/// Regresses a field law on sampled pixels of the training window.
pub fn fit_fields(
    fields: &FieldSeries,
    w: &Window,
    spec: &LibrarySpec,
    lambda_sp: f64,
    regress: &RegressConfig,
    ex: &ExtractConfig,
) -> Result<SparseModel> {
    let (lib, dz) = field_regression(fields, spec, w, ex)?;
    let mut model = stlsq(&lib, &dz, lambda_sp, regress.max_iter)?;
    model.grid = Some(fields.grid);
    Ok(model)
}

/// Field analogue of [`score_trajectory`]; R² is pooled over channels and pixels.
pub fn score_fields(
    model: &SparseModel,
    fields: &FieldSeries,
    w: &Window,
    vps_eps: f64,
    ex: &ExtractConfig,
) -> Result<(Metrics, FieldSeries, FieldSeries)> {
    if model.state_names != fields.channel_names() {
        return Err(Error::Shape(format!("model states {:?} vs field channels {:?}", model.state_names, fields.channel_names())));
    }
    let (lib, dz) = field_regression(fields, &model.library_spec, w, ex)?;
    check_layout(&lib, model)?;
    let r2 = r2_score(&dz, &predicted(&lib, model))?;
    let truth = fields.slice(w.start, w.start + w.horizon + 1)?;
    let mut pred = extrapolate_field(model, &fields.snapshot(w.start), fields.dt, w.horizon)?;
    let t0 = truth.times[0];
    pred.times.iter_mut().for_each(|t| *t += t0);
    let err = rmse_fields(&pred, &truth)?;
    let metrics = Metrics {
        r2,
        r2_extrapolation: field_r2(&pred, &truth)?,
        rmse: err.value,
        vps: vps_fields(&pred, &truth, vps_eps)?,
        horizon: w.horizon,
        divergence_step: pred.divergence,
        l0: model.complexity(),
    };
    Ok((metrics, pred, truth))
}

/// Pooled R² with one column per channel; frames missing after a divergence
/// repeat the last valid frame.
fn field_r2(pred: &FieldSeries, truth: &FieldSeries) -> Result<f64> {
    let cells = truth.grid.cells();
    let rows = truth.len() * cells;
    let valid = pred.len();
    if valid == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut t = DMatrix::zeros(rows, truth.channels.len());
    let mut p = DMatrix::zeros(rows, truth.channels.len());
    for (c, tc) in truth.channels.iter().enumerate() {
        let pc = pred
            .channels
            .iter()
            .find(|x| x.name == tc.name)
            .ok_or_else(|| Error::Shape(format!("prediction lacks channel `{}`", tc.name)))?;
        for r in 0..rows {
            t[(r, c)] = tc.data[r];
            let k = (r / cells).min(valid - 1);
            p[(r, c)] = pc.data[k * cells + r % cells];
        }
    }
    r2_score(&t, &p)
}

/// Centre-pixel time series of each channel (for plots).
pub fn probe_series(fields: &FieldSeries) -> Result<TrajectorySeries> {
    let g = fields.grid;
    let idx = (g.height / 2) * g.width + g.width / 2;
    let c = fields.channels.len();
    let mut states = Vec::with_capacity(fields.len() * c);
    for k in 0..fields.len() {
        for ch in 0..c {
            states.push(fields.frame(ch, k)[idx]);
        }
    }
    let t0 = fields.times.first().copied().unwrap_or(0.0);
    Ok(TrajectorySeries::uniform(t0, fields.dt, c, states)?.with_divergence(fields.divergence))
}
