use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::evaluate::DiagnosticReport;
use crate::regress::LibrarySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Variable,
    Equation,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    ReExtractWithPhysics,
    AdjustLambdaSp,
    AdjustLibrary,
    AdjustLambdaEq,
    Accept,
}

impl Action {
    pub const ALL: [Action; 5] =
        [Action::ReExtractWithPhysics, Action::AdjustLambdaSp, Action::AdjustLibrary, Action::AdjustLambdaEq, Action::Accept];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::ReExtractWithPhysics => "re_extract_with_physics",
            Action::AdjustLambdaSp => "adjust_lambda_sp",
            Action::AdjustLibrary => "adjust_library",
            Action::AdjustLambdaEq => "adjust_lambda_eq",
            Action::Accept => "accept",
        }
    }

    pub fn target(self) -> Target {
        match self {
            Action::ReExtractWithPhysics | Action::AdjustLambdaEq => Target::Variable,
            Action::AdjustLambdaSp | Action::AdjustLibrary => Target::Equation,
            Action::Accept => Target::Terminate,
        }
    }
}

/// Override keys an instruction may carry.
pub const PARAM_KEYS: [&str; 5] = ["lambda_sp", "lambda_eq", "poly_degree", "include_trig", "include_exp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInstruction {
    pub target: Target,
    pub action: Action,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default)]
    pub rationale: String,
}

impl PlanInstruction {
    fn new(action: Action, params: &[(&str, Value)], rationale: impl Into<String>) -> Self {
        Self {
            target: action.target(),
            action,
            params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            rationale: rationale.into(),
        }
    }

    pub fn accept(rationale: impl Into<String>) -> Self {
        Self::new(Action::Accept, &[], rationale)
    }

    /// A terminate instruction carries no stage change.
    pub fn is_terminal(&self) -> bool {
        self.target == Target::Terminate
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Parameters of the variable and equation stages at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub lambda_sp: f64,
    pub library: LibrarySpec,
    /// `0` on a cold-start extraction.
    pub lambda_eq: f64,
    /// Iteration whose model drives the physics loss, if any (the latest
    /// model at each variable-stage change).
    pub physics_from: Option<usize>,
}

impl StageParams {
    pub fn initial(cfg: &RunConfig) -> Self {
        Self { lambda_sp: cfg.regress.lambda_sp, library: cfg.regress.library.clone(), lambda_eq: 0.0, physics_from: None }
    }

    fn variable_eq(&self, o: &Self) -> bool {
        self.lambda_eq == o.lambda_eq && self.physics_from.is_some() == o.physics_from.is_some()
    }

    fn equation_eq(&self, o: &Self) -> bool {
        self.lambda_sp == o.lambda_sp && self.library == o.library
    }

    /// Equal up to which iteration provided the physics model.
    pub fn same_config(&self, o: &Self) -> bool {
        self.variable_eq(o) && self.equation_eq(o)
    }

    /// Stages whose parameters differ: `(variable, equation)`.
    pub fn changed_stages(&self, o: &Self) -> (bool, bool) {
        (!(self.variable_eq(o) && self.physics_from == o.physics_from), !self.equation_eq(o))
    }

    /// Applies a validated non-terminal instruction issued after `iteration`.
    pub fn apply(&self, ins: &PlanInstruction, iteration: usize) -> Result<Self> {
        let mut next = self.clone();
        let num = |k: &str| -> Result<f64> {
            ins.params
                .get(k)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Config(format!("{} requires numeric `{k}`", ins.action.as_str())))
        };
        match ins.action {
            Action::AdjustLambdaSp => next.lambda_sp = num("lambda_sp")?,
            Action::AdjustLambdaEq | Action::ReExtractWithPhysics => {
                next.lambda_eq = num("lambda_eq")?;
                next.physics_from = Some(iteration);
            }
            Action::AdjustLibrary => {
                if let Some(v) = ins.params.get("poly_degree") {
                    next.library.poly_degree = v.as_u64().ok_or_else(|| Error::Config("poly_degree must be a non-negative integer".into()))? as usize;
                }
                for key in ["include_trig", "include_exp"] {
                    if let Some(v) = ins.params.get(key) {
                        let b = v.as_bool().ok_or_else(|| Error::Config(format!("{key} must be a boolean")))?;
                        if key == "include_trig" {
                            next.library.include_trig = b;
                        } else {
                            next.library.include_exp = b;
                        }
                    }
                }
            }
            Action::Accept => return Err(Error::pre("accept does not change stage parameters")),
        }
        Ok(next)
    }
}

/// Actions meaningful in a mode.
pub fn allowed_actions(mode: Mode) -> Vec<Action> {
    Action::ALL
        .into_iter()
        .filter(|a| mode == Mode::Representation || a.target() != Target::Variable)
        .collect()
}

/// Checks an externally supplied instruction against the schema.
pub fn validate_instruction(ins: &PlanInstruction, mode: Mode, current: &StageParams, has_model: bool) -> Result<()> {
    let bad = |m: String| Err(Error::Config(m));
    if ins.target != ins.action.target() {
        return bad(format!("action {} is inconsistent with its target", ins.action.as_str()));
    }
    if !allowed_actions(mode).contains(&ins.action) {
        return bad(format!("action {} is not allowed in {} mode", ins.action.as_str(), mode.as_str()));
    }
    if let Some(k) = ins.params.keys().find(|k| !PARAM_KEYS.contains(&k.as_str())) {
        return bad(format!("unknown parameter `{k}`"));
    }
    let positive = |k: &str| ins.params.get(k).and_then(Value::as_f64).filter(|v| v.is_finite() && *v >= 0.0);
    match ins.action {
        Action::AdjustLambdaSp if positive("lambda_sp").is_none() => return bad("lambda_sp must be a non-negative number".into()),
        Action::AdjustLambdaEq | Action::ReExtractWithPhysics if positive("lambda_eq").is_none() => {
            return bad("lambda_eq must be a non-negative number".into())
        }
        Action::ReExtractWithPhysics if !has_model => return bad("no model to drive the physics loss".into()),
        Action::AdjustLibrary => {
            if let Some(d) = ins.params.get("poly_degree") {
                if !matches!(d.as_u64(), Some(1..=8)) {
                    return bad("poly_degree must be an integer in 1..=8".into());
                }
            }
            for k in ["include_trig", "include_exp"] {
                if ins.params.get(k).is_some_and(|v| !v.is_boolean()) {
                    return bad(format!("{k} must be a boolean"));
                }
            }
        }
        _ => {}
    }
    if !ins.is_terminal() {
        let next = current.apply(ins, 0)?;
        if next.same_config(current) {
            return bad("instruction does not change any parameter".into());
        }
    }
    Ok(())
}

/// Default `l0_max`: two plus three per library input variable.
pub fn l0_limit(cfg: &RunConfig, report: &DiagnosticReport) -> usize {
    cfg.planner.l0_max.unwrap_or_else(|| {
        let inputs = report
            .tool_params
            .get("library_inputs")
            .and_then(Value::as_u64)
            .unwrap_or(2) as usize;
        2 + 3 * inputs
    })
}

fn next_above(ladder: &[f64], v: f64) -> Option<f64> {
    ladder.iter().copied().find(|&x| x > v)
}

fn next_below(ladder: &[f64], v: f64) -> Option<f64> {
    ladder.iter().rev().copied().find(|&x| x < v)
}

/// Library enlargement: raise the degree up to the cap, then add trig terms.
fn enlarged(spec: &LibrarySpec, max_degree: usize) -> Option<(&'static str, Value)> {
    if spec.poly_degree < max_degree {
        Some(("poly_degree", Value::from(spec.poly_degree + 1)))
    } else if !spec.include_trig {
        Some(("include_trig", Value::Bool(true)))
    } else {
        None
    }
}

fn cand(action: Action, key: &str, value: Value, why: String) -> PlanInstruction {
    PlanInstruction::new(action, &[(key, value)], why)
}

/// Rationale prefix of the terminate instruction issued when no rule applies.
pub const EXHAUSTED: &str = "ladders exhausted";

/// Rule-based policy. `visited` holds the stage parameters already tried; an
/// instruction that would revisit one is skipped so the loop never cycles.
/// `has_model` is false when the last regression produced no usable model.
pub fn diagnose(
    report: &DiagnosticReport,
    current: &StageParams,
    visited: &[StageParams],
    has_model: bool,
    cfg: &RunConfig,
) -> PlanInstruction {
    let p = &cfg.planner;
    let l0_max = l0_limit(cfg, report);
    let vps_needed = p.vps_min_fraction * report.horizon as f64;
    let r2_ok = report.r2 >= p.r2_min;
    let vps_ok = report.vps as f64 >= vps_needed;
    let sparse_ok = report.l0 <= l0_max;
    if r2_ok && vps_ok && sparse_ok && has_model {
        return PlanInstruction::accept(format!(
            "r2 {:.4} >= {}, vps {} >= {:.1}, l0 {} <= {l0_max}",
            report.r2, p.r2_min, report.vps, vps_needed, report.l0
        ));
    }

    let mut options: Vec<PlanInstruction> = Vec::new();
    let lam = current.lambda_sp;
    let raise_sp = next_above(&p.lambda_sp_ladder, lam);
    let lower_sp = next_below(&p.lambda_sp_ladder, lam);
    let grow = enlarged(&current.library, p.max_poly_degree);

    if p.mode == Mode::Representation && has_model {
        let rel = report.recon_error.unwrap_or(0.0);
        let smooth = report.smoothness.unwrap_or(0.0);
        if rel > p.recon_ceiling || smooth > p.smoothness_max {
            let why = format!("relative reconstruction error {rel:.4} (ceiling {}), smoothness {smooth:.4} (max {})", p.recon_ceiling, p.smoothness_max);
            if current.physics_from.is_none() {
                if let Some(&first) = p.lambda_eq_ladder.first() {
                    options.push(cand(Action::ReExtractWithPhysics, "lambda_eq", Value::from(first), format!("{why}; activate the physics loss with the current law")));
                }
            } else if let Some(next) = next_above(&p.lambda_eq_ladder, current.lambda_eq) {
                options.push(cand(Action::AdjustLambdaEq, "lambda_eq", Value::from(next), format!("{why}; strengthen the physics loss")));
            }
        }
    }
    if !sparse_ok && r2_ok {
        if let Some(v) = raise_sp {
            options.push(cand(Action::AdjustLambdaSp, "lambda_sp", Value::from(v), format!("l0 {} exceeds {l0_max} with r2 {:.4}; raise the threshold", report.l0, report.r2)));
        }
    }
    if !r2_ok {
        let why = format!("r2 {:.4} below {}", report.r2, p.r2_min);
        let lower = lower_sp.map(|v| cand(Action::AdjustLambdaSp, "lambda_sp", Value::from(v), format!("{why} with l0 {}; lower the threshold", report.l0)));
        let enlarge = grow.clone().map(|(k, v)| cand(Action::AdjustLibrary, k, v, format!("{why}; enlarge the library")));
        if sparse_ok {
            options.extend(lower);
            options.extend(enlarge);
        } else {
            options.extend(enlarge);
            if let Some(v) = raise_sp {
                options.push(cand(Action::AdjustLambdaSp, "lambda_sp", Value::from(v), format!("{why} with l0 {}; raise the threshold", report.l0)));
            }
        }
    }
    if r2_ok && (!vps_ok || report.divergence_step.is_some()) {
        let why = match report.divergence_step {
            Some(k) => format!("extrapolation diverged at step {k} despite r2 {:.4}", report.r2),
            None => format!("vps {} short of {vps_needed:.1} despite r2 {:.4}", report.vps, report.r2),
        };
        if let Some(v) = raise_sp {
            options.push(cand(Action::AdjustLambdaSp, "lambda_sp", Value::from(v), format!("{why}; overfit, raise the threshold")));
        }
        if let Some((k, v)) = grow {
            options.push(cand(Action::AdjustLibrary, k, v, format!("{why}; enlarge the library")));
        }
    }

    for ins in options {
        let Ok(next) = current.apply(&ins, report.iteration) else { continue };
        if next.same_config(current) || visited.iter().any(|v| v.same_config(&next)) {
            continue;
        }
        return ins;
    }
    PlanInstruction::accept(format!("{EXHAUSTED}; keep the best model so far by (vps, r2, -l0)"))
}

/// Separates an accept-by-success from an accept-because-exhausted.
pub fn is_exhaustion(ins: &PlanInstruction) -> bool {
    ins.action == Action::Accept && ins.rationale.starts_with(EXHAUSTED)
}
