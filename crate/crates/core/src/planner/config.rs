use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{AutoencoderConfig, TrackConfig};
use crate::regress::LibrarySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Object,
    Pixel,
    Representation,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Object => "object",
            Mode::Pixel => "pixel",
            Mode::Representation => "representation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "object" => Ok(Mode::Object),
            "pixel" => Ok(Mode::Pixel),
            "representation" => Ok(Mode::Representation),
            other => Err(Error::Config(format!("unknown mode `{other}` (object, pixel, representation)"))),
        }
    }

    /// Training samples used when `evaluate.train_steps` is unset.
    pub fn default_train_steps(self) -> Option<usize> {
        match self {
            Mode::Object => Some(200),
            Mode::Pixel => Some(100),
            Mode::Representation => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub track: TrackConfig,
    /// Spatial operators applied to every channel in pixel mode
    /// (`laplacian`, `biharmonic`, `dx`, `dy`, `dxx`, `dyy`).
    pub operators: Vec<String>,
    pub n_samples: usize,
    pub skip_boundary: usize,
    pub sample_seed: u64,
    pub latent_dim: usize,
    pub autoencoder: AutoencoderConfig,
    /// Epochs for physics-informed re-extraction (warm-started); defaults to `autoencoder.epochs`.
    pub physics_epochs: Option<usize>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            track: TrackConfig::default(),
            operators: vec!["laplacian".into(), "biharmonic".into()],
            n_samples: 1000,
            skip_boundary: 0,
            sample_seed: 0,
            latent_dim: 2,
            autoencoder: AutoencoderConfig::default(),
            physics_epochs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressConfig {
    pub library: LibrarySpec,
    /// Threshold for the first regression.
    pub lambda_sp: f64,
    pub max_iter: usize,
    /// Significant digits in printed equations.
    pub precision: usize,
}

impl Default for RegressConfig {
    fn default() -> Self {
        Self { library: LibrarySpec { custom_degree: 0, ..Default::default() }, lambda_sp: 0.02, max_iter: 10, precision: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Last training sample index; mode default when unset.
    pub train_steps: Option<usize>,
    pub horizon: usize,
    pub vps_eps: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { train_steps: None, horizon: 1000, vps_eps: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub mode: Mode,
    pub max_iterations: usize,
    pub r2_min: f64,
    pub vps_min_fraction: f64,
    /// Defaults to `2 + 3·(library input variables)`.
    pub l0_max: Option<usize>,
    pub lambda_sp_ladder: Vec<f64>,
    pub lambda_eq_ladder: Vec<f64>,
    /// Library enlargement stops raising the degree here, then enables trig terms.
    pub max_poly_degree: usize,
    /// Ceiling on reconstruction error relative to the mean-frame baseline.
    pub recon_ceiling: f64,
    /// Ceiling on the trajectory smoothness score.
    pub smoothness_max: f64,
    /// Subprocess command or `http(s)://` URL.
    pub advisor: Option<String>,
    pub advisor_timeout_s: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Object,
            max_iterations: 5,
            r2_min: 0.95,
            vps_min_fraction: 0.9,
            l0_max: None,
            lambda_sp_ladder: vec![0.02, 0.05, 0.1, 0.2, 0.5],
            lambda_eq_ladder: vec![0.1, 1.0, 10.0],
            max_poly_degree: 5,
            recon_ceiling: 0.1,
            smoothness_max: 0.5,
            advisor: None,
            advisor_timeout_s: 30.0,
        }
    }
}

/// Everything a discovery run needs besides its input.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub extract: ExtractConfig,
    pub regress: RegressConfig,
    pub evaluate: EvaluateConfig,
    pub planner: PlannerConfig,
}

fn sorted_positive(v: &[f64]) -> bool {
    !v.is_empty() && v.iter().all(|x| x.is_finite() && *x >= 0.0) && v.windows(2).all(|w| w[0] < w[1])
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.planner;
        let fail = |m: &str| Err(Error::Config(m.into()));
        if p.max_iterations < 1 {
            return fail("planner.max_iterations must be >= 1");
        }
        if !sorted_positive(&p.lambda_sp_ladder) {
            return fail("planner.lambda_sp_ladder must be non-empty, non-negative and strictly increasing");
        }
        if !sorted_positive(&p.lambda_eq_ladder) {
            return fail("planner.lambda_eq_ladder must be non-empty, non-negative and strictly increasing");
        }
        if !(p.vps_min_fraction >= 0.0 && p.vps_min_fraction <= 1.0) {
            return fail("planner.vps_min_fraction must lie in [0, 1]");
        }
        if !(p.advisor_timeout_s > 0.0) {
            return fail("planner.advisor_timeout_s must be > 0");
        }
        if !(self.regress.lambda_sp >= 0.0) || self.regress.max_iter == 0 {
            return fail("regress.lambda_sp must be >= 0 and regress.max_iter >= 1");
        }
        if !(self.evaluate.vps_eps > 0.0) {
            return fail("evaluate.vps_eps must be > 0");
        }
        if p.mode == Mode::Representation && self.extract.latent_dim == 0 {
            return fail("extract.latent_dim must be >= 1");
        }
        if p.mode == Mode::Pixel {
            for op in &self.extract.operators {
                operator_kind(op)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn operator_kind(name: &str) -> Result<crate::extract::Operator> {
    use crate::extract::Operator;
    Ok(match name {
        "laplacian" => Operator::Laplacian,
        "biharmonic" => Operator::Biharmonic,
        "dx" => Operator::Dx,
        "dy" => Operator::Dy,
        "dxx" => Operator::Dxx,
        "dyy" => Operator::Dyy,
        other => {
            return Err(Error::Config(format!(
                "unknown operator `{other}` (laplacian, biharmonic, dx, dy, dxx, dyy)"
            )))
        }
    })
}
