//! Layered configuration: built-in defaults, then a JSON file, then
//! `--set key=value` overrides, all addressed by dotted keys.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use vidlaw::planner::{EvaluateConfig, ExtractConfig, PlannerConfig, RegressConfig, RunConfig};
use vidlaw::render::RenderConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub system: String,
    /// Integration steps; the sequence holds `steps + 1` frames.
    pub steps: usize,
    /// System default when unset.
    pub dt: Option<f64>,
    pub z0: Option<Vec<f64>>,
    pub params: BTreeMap<String, f64>,
    /// Side of the square grid for field systems.
    pub grid: usize,
    /// Seeds the initial field of PDE systems.
    pub seed: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { system: "linear".into(), steps: 1200, dt: None, z0: None, params: BTreeMap::new(), grid: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderStyle {
    /// A disc at the state's position (two-dimensional ODE systems).
    Object,
    /// One fixed spatial pattern per state dimension, scaled by the state.
    Modes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub style: RenderStyle,
    pub width: usize,
    pub height: usize,
    pub world_window: Option<(f64, f64, f64, f64)>,
    pub ball_radius: f64,
    pub background: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Peak intensity deviation of mode renders.
    pub mode_amplitude: f64,
    /// Relative padding of field value ranges.
    pub range_margin: f64,
}

impl Default for RenderSection {
    fn default() -> Self {
        let r = RenderConfig::default();
        Self {
            style: RenderStyle::Object,
            width: r.width,
            height: r.height,
            world_window: r.world_window,
            ball_radius: r.ball_radius,
            background: r.background,
            noise_sigma: r.noise_sigma,
            seed: r.seed,
            mode_amplitude: 0.4,
            range_margin: 0.05,
        }
    }
}

impl RenderSection {
    pub fn to_render_config(&self) -> RenderConfig {
        RenderConfig {
            width: self.width,
            height: self.height,
            world_window: self.world_window,
            ball_radius: self.ball_radius,
            background: self.background,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }
}

/// Every module's settings under one namespaced tree.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub dynamics: DynamicsConfig,
    pub render: RenderSection,
    pub extract: ExtractConfig,
    pub regress: RegressConfig,
    pub evaluate: EvaluateConfig,
    pub planner: PlannerConfig,
}

impl CliConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            extract: self.extract.clone(),
            regress: self.regress.clone(),
            evaluate: self.evaluate.clone(),
            planner: self.planner.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Sets every seed in the tree.
    pub fn set_seed(&mut self, seed: u64) {
        self.dynamics.seed = seed;
        self.render.seed = seed;
        self.extract.sample_seed = seed;
        self.extract.autoencoder.seed = seed;
    }
}

/// Maps whose entries are free-form (`dynamics.params.<name>`).
const OPEN_MAPS: [&str; 1] = ["dynamics.params"];

/// Every addressable dotted key of the default tree.
fn known_keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(m) = v {
        for (k, child) in m {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            out.push(key.clone());
            if !OPEN_MAPS.contains(&key.as_str()) {
                known_keys(child, &key, out);
            }
        }
    }
}

fn suggest(key: &str, known: &[String]) -> String {
    let best = known
        .iter()
        .map(|k| (strsim::levenshtein(key, k), k))
        .min_by_key(|(d, _)| *d)
        .filter(|(d, _)| *d <= key.len().max(4) / 2 + 2);
    match best {
        Some((_, k)) => format!("unknown config key `{key}`; did you mean `{k}`?"),
        None => format!("unknown config key `{key}`"),
    }
}

fn check_key(key: &str, known: &[String]) -> Result<()> {
    if known.iter().any(|k| k == key) || OPEN_MAPS.iter().any(|m| key.starts_with(&format!("{m}.")) && key.len() > m.len() + 1) {
        Ok(())
    } else {
        bail!(suggest(key, known))
    }
}

/// Writes `value` at a dotted path, creating intermediate objects.
fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            other => {
                *other = Value::Object(Map::new());
                other.as_object_mut().expect("just set")
            }
        };
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*part).to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Err(anyhow!("empty config key"))
}

fn flatten(v: &Value, prefix: &str, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) if !OPEN_MAPS.contains(&prefix) || m.is_empty() => {
            if m.is_empty() && !prefix.is_empty() {
                out.push((prefix.to_string(), v.clone()));
            }
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(child, &key, out);
            }
        }
        Value::Object(m) => {
            for (k, child) in m {
                out.push((format!("{prefix}.{k}"), child.clone()));
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

/// Parses the right-hand side of `--set`: JSON when it parses, else a string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Resolves defaults ← file ← overrides into a typed config.
pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<CliConfig> {
    let defaults = serde_json::to_value(CliConfig::default())?;
    let mut known = Vec::new();
    known_keys(&defaults, "", &mut known);
    let mut tree = defaults;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if !v.is_object() {
            bail!("config {} must hold a JSON object", path.display());
        }
        let mut pairs = Vec::new();
        flatten(&v, "", &mut pairs);
        for (k, val) in pairs {
            check_key(&k, &known).with_context(|| format!("in {}", path.display()))?;
            set_path(&mut tree, &k, val)?;
        }
    }
    for o in overrides {
        let (k, raw) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not of the form key=value"))?;
        let k = k.trim();
        check_key(k, &known)?;
        set_path(&mut tree, k, parse_value(raw.trim()))?;
    }
    let cfg: CliConfig = serde_json::from_value(tree).map_err(|e| anyhow!("invalid configuration: {e}"))?;
    cfg.run_config().validate()?;
    Ok(cfg)
}
