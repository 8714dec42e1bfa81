//! The diagnose-and-refine loop over extraction, regression and evaluation.

pub mod advisor;
mod config;
pub mod pipeline;
mod policy;
mod run;

pub use advisor::{advise_external, AdvisorRequest};
pub use config::{EvaluateConfig, ExtractConfig, Mode, PlannerConfig, RegressConfig, RunConfig};
pub use pipeline::{fit_fields, fit_trajectory, operator_features, probe_series, score_fields, score_trajectory, Metrics, Window};
pub use policy::{
    allowed_actions, diagnose, is_exhaustion, l0_limit, validate_instruction, Action, PlanInstruction, StageParams, Target,
    EXHAUSTED, PARAM_KEYS,
};
pub use run::{run_discovery, DiscoveryInput, FinalSummary, HistoryEntry, RunHistory, StepSummary, Termination};
