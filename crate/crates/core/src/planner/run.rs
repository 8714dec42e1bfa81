use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::advisor::advise_external;
use super::config::{Mode, RunConfig};
use super::pipeline::{fit_fields, fit_trajectory, operator_features, probe_series, score_fields, score_trajectory, Metrics, Window};
use super::policy::{diagnose, is_exhaustion, PlanInstruction, StageParams};
use crate::dynamics::{FieldSeries, TrajectorySeries};
use crate::error::{Error, Result};
use crate::evaluate::{emit_report, smoothness, DiagnosticReport, ReportArtifacts};
use crate::extract::{
    mean_frame_baseline, reconstruction_error, save_model, track_and_filter, train_autoencoder, train_autoencoder_from,
    AutoencoderModel,
};
use crate::regress::SparseModel;
use crate::render::FrameSequence;

/// Observations a run starts from.
#[derive(Debug, Clone)]
pub enum DiscoveryInput {
    Frames(FrameSequence),
    Fields(FieldSeries),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Accepted,
    BudgetExhausted,
    LaddersExhausted,
    Failed,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Accepted => "accepted",
            Termination::BudgetExhausted => "budget_exhausted",
            Termination::LaddersExhausted => "ladders_exhausted",
            Termination::Failed => "failed",
        }
    }
}

/// One iteration: the parameters it ran with, its report, and the
/// instruction derived from that report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub params: StageParams,
    pub report: DiagnosticReport,
    pub metrics: Metrics,
    pub model: SparseModel,
    pub instruction: PlanInstruction,
    pub from_advisor: bool,
    /// Variables this iteration was fitted to (centre-pixel probe in pixel mode).
    #[serde(skip)]
    pub trajectory: Option<TrajectorySeries>,
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub mode: Mode,
    pub entries: Vec<HistoryEntry>,
    pub final_index: Option<usize>,
    pub window: Option<Window>,
    pub termination: Termination,
    pub error: Option<String>,
}

impl RunHistory {
    pub fn final_entry(&self) -> Option<&HistoryEntry> {
        self.final_index.map(|i| &self.entries[i])
    }

    pub fn final_model(&self) -> Option<&SparseModel> {
        self.final_entry().map(|e| &e.model)
    }

    pub fn final_trajectory(&self) -> Option<&TrajectorySeries> {
        self.final_entry().and_then(|e| e.trajectory.as_ref())
    }

    pub fn summary(&self) -> FinalSummary {
        let fin = self.final_entry();
        FinalSummary {
            mode: self.mode,
            termination_reason: self.termination,
            final_iteration: self.final_index,
            iterations: self.entries.len(),
            equations: fin.map(|e| e.report.equations.clone()).unwrap_or_default(),
            metrics: fin.map(|e| e.metrics),
            recon_error: fin.and_then(|e| e.report.recon_error),
            window: self.window,
            error: self.error.clone(),
            steps: self
                .entries
                .iter()
                .map(|e| StepSummary {
                    iteration: e.report.iteration,
                    action: e.instruction.action.as_str().into(),
                    params: e.instruction.params.clone(),
                    rationale: e.instruction.rationale.clone(),
                    from_advisor: e.from_advisor,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub iteration: usize,
    pub action: String,
    pub params: std::collections::BTreeMap<String, Value>,
    pub rationale: String,
    pub from_advisor: bool,
}

/// Contents of `final.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub mode: Mode,
    pub termination_reason: Termination,
    pub final_iteration: Option<usize>,
    pub iterations: usize,
    pub equations: Vec<String>,
    pub metrics: Option<Metrics>,
    pub recon_error: Option<f64>,
    pub window: Option<Window>,
    pub error: Option<String>,
    pub steps: Vec<StepSummary>,
}

/// Output of the variable stage.
enum Variables {
    Trajectory { series: TrajectorySeries, names: Vec<String>, ae: Option<AutoencoderModel>, recon: Option<f64> },
    Fields(FieldSeries),
}

fn latent_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("z{i}")).collect()
}

fn frames_of(input: &DiscoveryInput, mode: Mode) -> Result<&FrameSequence> {
    match input {
        DiscoveryInput::Frames(f) => Ok(f),
        DiscoveryInput::Fields(_) => Err(Error::pre(format!("{} mode needs a frame sequence, got a field series", mode.as_str()))),
    }
}

fn extract(
    input: &DiscoveryInput,
    cfg: &RunConfig,
    params: &StageParams,
    physics: Option<&SparseModel>,
    prev: Option<&Variables>,
) -> Result<Variables> {
    let mode = cfg.planner.mode;
    match mode {
        Mode::Object => {
            let r = track_and_filter(frames_of(input, mode)?, &cfg.extract.track)?;
            let names = latent_names(r.series.dim());
            Ok(Variables::Trajectory { series: r.series, names, ae: None, recon: None })
        }
        Mode::Pixel => match input {
            DiscoveryInput::Fields(f) => Ok(Variables::Fields(f.clone())),
            DiscoveryInput::Frames(f) => Ok(Variables::Fields(f.to_field_series()?)),
        },
        Mode::Representation => {
            let frames = frames_of(input, mode)?;
            let d = cfg.extract.latent_dim;
            let mut ae_cfg = cfg.extract.autoencoder.clone();
            let (ae, latent) = match physics {
                None => {
                    ae_cfg.lambda_eq = 0.0;
                    train_autoencoder(frames, d, &ae_cfg, None)?
                }
                Some(model) => {
                    ae_cfg.lambda_eq = params.lambda_eq;
                    ae_cfg.epochs = cfg.extract.physics_epochs.unwrap_or(ae_cfg.epochs);
                    let init = match prev {
                        Some(Variables::Trajectory { ae: Some(a), .. }) => Some(a),
                        _ => None,
                    };
                    train_autoencoder_from(frames, d, &ae_cfg, Some(model), init)?
                }
            };
            let base = mean_frame_baseline(frames);
            let recon = reconstruction_error(&ae, frames)?;
            let rel = if base > 0.0 { recon / base } else { 0.0 };
            Ok(Variables::Trajectory { series: latent, names: latent_names(d), ae: Some(ae), recon: Some(rel) })
        }
    }
}

fn variables_len(v: &Variables) -> usize {
    match v {
        Variables::Trajectory { series, .. } => series.len(),
        Variables::Fields(f) => f.len(),
    }
}

struct Iteration {
    report: DiagnosticReport,
    metrics: Metrics,
    model: SparseModel,
}

fn equation_and_evaluate(
    vars: &Variables,
    w: &Window,
    cfg: &RunConfig,
    params: &StageParams,
    k: usize,
    out_dir: Option<&Path>,
) -> Result<Iteration> {
    let mode = cfg.planner.mode;
    let mut report = DiagnosticReport::new(k, mode.as_str());
    let eps = cfg.evaluate.vps_eps;
    let (model, metrics, inputs) = match vars {
        Variables::Trajectory { series, names, ae, recon } => {
            let model = fit_trajectory(series, names, w, &params.library, params.lambda_sp, &cfg.regress)?;
            let (metrics, pred, truth) = score_trajectory(&model, series, w, eps)?;
            report.recon_error = *recon;
            report.smoothness = Some(smoothness(series));
            if let Some(dir) = out_dir {
                let rel = format!("iter_{k}");
                let art = ReportArtifacts { truth: &truth, pred: &pred, model: Some(&model), names: names.clone() };
                fill(&mut report, &metrics, &model, params, w, names.len(), cfg);
                report = emit_report(&dir.join(&rel), &rel, report, &art)?;
                if let Some(a) = ae {
                    save_model(a, &dir.join(&rel).join("autoencoder.bin"))?;
                }
            }
            (model, metrics, names.len())
        }
        Variables::Fields(fields) => {
            let model = fit_fields(fields, w, &params.library, params.lambda_sp, &cfg.regress, &cfg.extract)?;
            let (metrics, pred, truth) = score_fields(&model, fields, w, eps, &cfg.extract)?;
            let inputs = fields.channels.len() + params.library.custom.len();
            if let Some(dir) = out_dir {
                let rel = format!("iter_{k}");
                let (tp, pp) = (probe_series(&truth)?, probe_series(&pred)?);
                let art = ReportArtifacts { truth: &tp, pred: &pp, model: Some(&model), names: fields.channel_names() };
                fill(&mut report, &metrics, &model, params, w, inputs, cfg);
                report = emit_report(&dir.join(&rel), &rel, report, &art)?;
            }
            (model, metrics, inputs)
        }
    };
    fill(&mut report, &metrics, &model, params, w, inputs, cfg);
    Ok(Iteration { report, metrics, model })
}

fn fill(r: &mut DiagnosticReport, m: &Metrics, model: &SparseModel, p: &StageParams, w: &Window, inputs: usize, cfg: &RunConfig) {
    r.r2 = m.r2;
    r.r2_extrapolation = m.r2_extrapolation;
    r.l0 = m.l0;
    r.rmse = m.rmse;
    r.vps = m.vps;
    r.horizon = m.horizon;
    r.divergence_step = m.divergence_step;
    r.equations = model.to_symbolic(cfg.regress.precision);
    let tp = &mut r.tool_params;
    tp.insert("lambda_sp".into(), Value::from(p.lambda_sp));
    tp.insert("lambda_eq".into(), Value::from(p.lambda_eq));
    tp.insert("poly_degree".into(), Value::from(p.library.poly_degree));
    tp.insert("include_trig".into(), Value::from(p.library.include_trig));
    tp.insert("include_exp".into(), Value::from(p.library.include_exp));
    tp.insert("library_inputs".into(), Value::from(inputs));
    tp.insert("train_end".into(), Value::from(w.train_end));
    tp.insert("start".into(), Value::from(w.start));
}

/// Chooses the model to return: the accepted one, else the best by
/// `(vps, r2, -l0)` with ties going to the earliest iteration.
fn select_final(entries: &[HistoryEntry], accepted: Option<usize>) -> Option<usize> {
    accepted.or_else(|| {
        (0..entries.len()).reduce(|best, i| {
            if entries[i].report.rank_cmp(&entries[best].report).is_gt() {
                i
            } else {
                best
            }
        })
    })
}

/// Runs the diagnose-and-refine loop. Iteration 0 extracts (cold start),
/// regresses with the initial threshold and evaluates; each later iteration
/// applies one instruction and re-runs the stages downstream of it.
/// Artifacts go to `out_dir/iter_k/` when a directory is given.
pub fn run_discovery(input: &DiscoveryInput, cfg: &RunConfig, out_dir: Option<&Path>) -> RunHistory {
    let mode = cfg.planner.mode;
    let mut hist = RunHistory {
        mode,
        entries: Vec::new(),
        final_index: None,
        window: None,
        termination: Termination::Failed,
        error: None,
    };
    if let Err(e) = cfg.validate() {
        hist.error = Some(e.to_string());
        return hist;
    }
    let mut params = StageParams::initial(cfg);
    let mut visited: Vec<StageParams> = Vec::new();
    let mut vars: Option<Variables> = None;
    let mut accepted = None;
    let mut advisor_log = String::new();
    for k in 0..cfg.planner.max_iterations {
        let rerun_variables = match visited.last() {
            None => true,
            Some(prev) => prev.changed_stages(&params).0,
        };
        if rerun_variables {
            let physics = params.physics_from.map(|i| &hist.entries[i].model);
            match extract(input, cfg, &params, physics, vars.as_ref()) {
                Ok(v) => vars = Some(v),
                Err(e) => {
                    hist.error = Some(format!("iteration {k}: extraction failed: {e}"));
                    break;
                }
            }
        }
        let v = vars.as_ref().expect("extracted above");
        if k == 0 {
            let w = Window::new(
                variables_len(v),
                cfg.evaluate.train_steps.or(mode.default_train_steps()),
                cfg.evaluate.horizon,
            );
            match w {
                Ok(w) => hist.window = Some(w),
                Err(e) => {
                    hist.error = Some(format!("iteration 0: {e}"));
                    break;
                }
            }
            if let (Mode::Pixel, Variables::Fields(f)) = (mode, v) {
                if params.library.custom.is_empty() {
                    match operator_features(&cfg.extract.operators, &f.channel_names()) {
                        Ok(c) => params.library.custom = c,
                        Err(e) => {
                            hist.error = Some(e.to_string());
                            break;
                        }
                    }
                }
            }
        }
        let w = hist.window.expect("set at iteration 0");
        let it = match equation_and_evaluate(v, &w, cfg, &params, k, out_dir) {
            Ok(it) => it,
            Err(e) => {
                hist.error = Some(format!("iteration {k}: {e}"));
                break;
            }
        };
        visited.push(params.clone());
        let rule = diagnose(&it.report, &params, &visited, true, cfg);
        let (instruction, from_advisor) = match &cfg.planner.advisor {
            Some(endpoint) => {
                let advice = advise_external(
                    &it.report,
                    endpoint,
                    mode,
                    &params,
                    true,
                    Duration::from_secs_f64(cfg.planner.advisor_timeout_s),
                    rule,
                );
                advisor_log.push_str(&advice.log);
                (advice.instruction, advice.from_advisor)
            }
            None => (rule, false),
        };
        log::info!("iteration {k}: {} ({})", instruction.action.as_str(), instruction.rationale);
        let trajectory = match v {
            Variables::Trajectory { series, .. } => Some(series.clone()),
            Variables::Fields(f) => probe_series(f).ok(),
        };
        let terminal = instruction.is_terminal();
        let exhausted = is_exhaustion(&instruction);
        hist.entries.push(HistoryEntry {
            params: params.clone(),
            report: it.report,
            metrics: it.metrics,
            model: it.model,
            instruction: instruction.clone(),
            from_advisor,
            trajectory,
        });
        if terminal {
            if exhausted && !from_advisor {
                hist.termination = Termination::LaddersExhausted;
            } else {
                hist.termination = Termination::Accepted;
                accepted = Some(k);
            }
            break;
        }
        if k + 1 == cfg.planner.max_iterations {
            hist.termination = Termination::BudgetExhausted;
            break;
        }
        match params.apply(&instruction, k) {
            Ok(p) => params = p,
            Err(e) => {
                hist.error = Some(format!("iteration {k}: {e}"));
                break;
            }
        }
    }
    if hist.error.is_some() {
        hist.termination = Termination::Failed;
    }
    if let (Some(dir), false) = (out_dir, advisor_log.is_empty()) {
        if let Err(e) = std::fs::write(dir.join("advisor.log"), &advisor_log) {
            log::warn!("could not write advisor.log: {e}");
        }
    }
    hist.final_index = select_final(&hist.entries, accepted);
    hist
}
