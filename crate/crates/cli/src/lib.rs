//! Commands behind the `vidlaw` binary: data generation, discovery runs,
//! standalone evaluation and seed sweeps.

pub mod config;
mod sweep;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use vidlaw::dynamics::{builtin_system_with, integrate_ode, integrate_pde, Rhs, SystemSpec, TrajectorySeries};
use vidlaw::evaluate::curl_error;
use vidlaw::planner::{
    probe_series, run_discovery, score_fields, score_trajectory, DiscoveryInput, FinalSummary, Metrics, Mode, RunHistory,
    Termination, Window,
};
use vidlaw::regress::{format_sig, SparseModel};
use vidlaw::render::{auto_ranges, load_sequence, render_fields_video, render_mode_video, render_object_video, save_sequence};

pub use config::{resolve, CliConfig, RenderStyle};
pub use sweep::{support_scores, sweep, sweep_tables, SweepRow};

/// Exit codes of the binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const BUDGET: i32 = 3;
    pub const FAILURE: i32 = 4;
}

/// An error carrying the exit code it should produce.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for CliError {}

pub fn usage(e: anyhow::Error) -> CliError {
    CliError { code: exit::USAGE, error: e }
}

pub fn failure(e: anyhow::Error) -> CliError {
    CliError { code: exit::FAILURE, error: e }
}

/// `dz1/dt = -0.1*z1 + 2*z2` style strings for a system's true law.
pub fn truth_equations(spec: &SystemSpec) -> Vec<String> {
    spec.truth
        .iter()
        .zip(&spec.state_names)
        .map(|(terms, name)| {
            let mut rhs = String::new();
            for (feature, c) in terms {
                let mag = format_sig(c.abs(), 4);
                let term = if feature == "1" { mag } else { format!("{mag}*{feature}") };
                if rhs.is_empty() {
                    rhs = if *c < 0.0 { format!("-{term}") } else { term };
                } else {
                    rhs.push_str(if *c < 0.0 { " - " } else { " + " });
                    rhs.push_str(&term);
                }
            }
            if rhs.is_empty() {
                rhs.push('0');
            }
            format!("d{name}/dt = {rhs}")
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub sequence: PathBuf,
    pub truth: PathBuf,
    pub frames: usize,
    pub equations: Vec<String>,
}

/// `X.seq` → `X.truth.csv`.
pub fn truth_path(seq: &Path) -> PathBuf {
    seq.with_extension("truth.csv")
}

/// Integrates the configured system, renders it and writes the sequence
/// plus the ground-truth trajectory CSV (centre-pixel probe for fields).
pub fn generate(cfg: &CliConfig, out: &Path) -> Result<GenOutput> {
    let d = &cfg.dynamics;
    let spec = builtin_system_with(&d.system, &d.params)?;
    let dt = d.dt.unwrap_or(spec.recommended_dt);
    let (mut seq, truth) = match &spec.rhs {
        Rhs::Ode(_) => {
            let z0 = d.z0.clone().unwrap_or_else(|| spec.default_z0.clone());
            let traj = integrate_ode(&spec, &z0, dt, d.steps)?;
            if let Some(k) = traj.divergence() {
                bail!("`{}` diverged at step {k}; choose a smaller dt or another z0", spec.name);
            }
            let rc = cfg.render.to_render_config();
            let seq = match cfg.render.style {
                RenderStyle::Object => {
                    if traj.dim() != 2 {
                        bail!("object renders need a two-dimensional state; use render.style=modes");
                    }
                    render_object_video(&traj, (0, 1), &rc)?
                }
                RenderStyle::Modes => render_mode_video(&traj, &rc, cfg.render.mode_amplitude)?,
            };
            (seq, traj)
        }
        Rhs::Pde { .. } => {
            let init = spec.initial_field(d.grid, d.seed)?;
            let fields = integrate_pde(&spec, &init, dt, d.steps)?;
            if let Some(k) = fields.divergence {
                bail!("`{}` diverged at step {k}; choose a smaller dt", spec.name);
            }
            let seq = render_fields_video(&fields, &auto_ranges(&fields, cfg.render.range_margin))?;
            let probe = probe_series(&fields)?;
            (seq, probe)
        }
    };
    seq.meta.source = spec.name.clone();
    seq.meta.seed = Some(d.seed);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    save_sequence(&seq, out)?;
    let tp = truth_path(out);
    std::fs::write(&tp, truth.to_csv_string(Some(&spec.state_names)))
        .with_context(|| format!("writing {}", tp.display()))?;
    Ok(GenOutput { sequence: out.to_path_buf(), truth: tp, frames: seq.len(), equations: truth_equations(&spec) })
}

pub struct DiscoverOutcome {
    pub run_dir: PathBuf,
    pub history: RunHistory,
    pub summary: FinalSummary,
}

impl DiscoverOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.summary.termination_reason {
            Termination::Accepted => exit::OK,
            Termination::BudgetExhausted | Termination::LaddersExhausted => exit::BUDGET,
            Termination::Failed => exit::FAILURE,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs discovery on a sequence file and writes the run directory:
/// `config.json`, `iter_k/`, `history.json`, `final.json`, `model.json`,
/// `trajectory.csv` (and `autoencoder.bin` in representation mode).
pub fn discover(input: &Path, cfg: &CliConfig, run_dir: &Path) -> Result<DiscoverOutcome> {
    let seq = load_sequence(input)?;
    std::fs::create_dir_all(run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    write(&run_dir.join("config.json"), &cfg.to_json()?)?;
    let history = run_discovery(&DiscoveryInput::Frames(seq), &cfg.run_config(), Some(run_dir));
    let summary = history.summary();
    write(&run_dir.join("final.json"), &serde_json::to_string_pretty(&summary)?)?;
    write(&run_dir.join("history.json"), &serde_json::to_string_pretty(&history.entries)?)?;
    if let Some(entry) = history.final_entry() {
        write(&run_dir.join("model.json"), &entry.model.to_json()?)?;
        if let Some(t) = &entry.trajectory {
            write(&run_dir.join("trajectory.csv"), &t.to_csv_string(Some(&entry.model.state_names)))?;
        }
        let ae = run_dir.join(format!("iter_{}", entry.report.iteration)).join("autoencoder.bin");
        if ae.exists() {
            std::fs::copy(&ae, run_dir.join("autoencoder.bin")).context("copying autoencoder weights")?;
        }
    }
    Ok(DiscoverOutcome { run_dir: run_dir.to_path_buf(), history, summary })
}

/// Run directory root: `P2P_RUN_ROOT` or `./runs`.
pub fn run_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("P2P_RUN_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// `<stem>-<mode>` plus a numeric suffix when that directory exists.
pub fn default_run_id(root: &Path, input: &Path, mode: Mode) -> String {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let base = format!("{stem}-{}", mode.as_str());
    if !root.join(&base).exists() {
        return base;
    }
    (1..).map(|i| format!("{base}-{i}")).find(|id| !root.join(id).exists()).expect("unbounded")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub window: Window,
    #[serde(default, with = "opt_f64", skip_serializing_if = "Option::is_none")]
    pub curl_error: Option<f64>,
}

mod opt_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "vidlaw::evaluate::json_f64")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(W).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

/// Loads the config echoed next to a model file, if present.
pub fn sibling_config(model: &Path) -> Option<PathBuf> {
    let p = model.parent()?.join("config.json");
    p.exists().then_some(p)
}

/// Recomputes metrics for a stored model against stored variables: a
/// trajectory CSV, or a field sequence for pixel-mode models.
pub fn evaluate_model(model_path: &Path, truth_path: &Path, cfg: &CliConfig, out_dir: Option<&Path>) -> Result<EvalReport> {
    let text = std::fs::read_to_string(model_path).with_context(|| format!("reading model {}", model_path.display()))?;
    let model = SparseModel::from_json(&text)?;
    if !truth_path.exists() {
        bail!("truth file {} does not exist", truth_path.display());
    }
    let rc = cfg.run_config();
    let train = rc.evaluate.train_steps.or(rc.planner.mode.default_train_steps());
    let is_csv = truth_path.extension().is_some_and(|e| e == "csv");
    let report = if is_csv {
        let series = TrajectorySeries::read_csv(truth_path)?;
        let w = Window::new(series.len(), train, rc.evaluate.horizon)?;
        let (metrics, pred, truth) = score_trajectory(&model, &series, &w, rc.evaluate.vps_eps)?;
        if let Some(dir) = out_dir {
            emit_plots(dir, &model, &pred, &truth, &metrics)?;
        }
        EvalReport { metrics, window: w, curl_error: None }
    } else {
        let seq = load_sequence(truth_path)?;
        if seq.meta.channels.iter().any(|c| c.value_range.is_none()) || seq.meta.channels.is_empty() {
            bail!("{} is not a field sequence; evaluate object or latent models against a trajectory CSV", truth_path.display());
        }
        let fields = seq.to_field_series()?;
        let w = Window::new(fields.len(), train, rc.evaluate.horizon)?;
        let (metrics, pred, truth) = score_fields(&model, &fields, &w, rc.evaluate.vps_eps, &rc.extract)?;
        let names = fields.channel_names();
        let curl = if names.iter().any(|n| n == "u") && names.iter().any(|n| n == "v") && pred.divergence.is_none() {
            Some(curl_error(&pred, &truth)?)
        } else {
            None
        };
        if let Some(dir) = out_dir {
            emit_plots(dir, &model, &probe_series(&pred)?, &probe_series(&truth)?, &metrics)?;
        }
        EvalReport { metrics, window: w, curl_error: curl }
    };
    if report.window.horizon < rc.evaluate.horizon {
        log::warn!("horizon clipped to {} by the available data", report.window.horizon);
    }
    if let Some(dir) = out_dir {
        write(&dir.join("metrics.json"), &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

fn emit_plots(dir: &Path, model: &SparseModel, pred: &TrajectorySeries, truth: &TrajectorySeries, m: &Metrics) -> Result<()> {
    let mut r = vidlaw::evaluate::DiagnosticReport::new(0, "eval");
    r.r2 = m.r2;
    r.r2_extrapolation = m.r2_extrapolation;
    r.rmse = m.rmse;
    r.vps = m.vps;
    r.l0 = m.l0;
    r.horizon = m.horizon;
    r.divergence_step = m.divergence_step;
    r.equations = model.to_symbolic(4);
    let art = vidlaw::evaluate::ReportArtifacts { truth, pred, model: Some(model), names: model.state_names.clone() };
    vidlaw::evaluate::emit_report(dir, "", r, &art)?;
    Ok(())
}

/// Parses `0,1,2` or a count `5` (meaning seeds `0..5`).
pub fn parse_seeds(list: Option<&str>, count: Option<u64>) -> Result<Vec<u64>> {
    match (list, count) {
        (Some(l), _) => {
            let seeds: Vec<u64> = l
                .split(',')
                .map(|s| s.trim().parse::<u64>().map_err(|e| anyhow!("bad seed `{s}`: {e}")))
                .collect::<Result<_>>()?;
            if seeds.is_empty() {
                bail!("at least one seed is required");
            }
            Ok(seeds)
        }
        (None, Some(0)) => bail!("at least one seed is required"),
        (None, Some(n)) => Ok((0..n).collect()),
        (None, None) => Ok((0..5).collect()),
    }
}
