use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectorySeries;
use crate::error::{Error, Result};
use crate::regress::SparseModel;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Serializes non-finite floats as the strings `inf`, `-inf`, `nan` so
/// reports survive a JSON round trip.
pub mod json_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub schema_version: u32,
    pub iteration: usize,
    pub mode: String,
    /// Derivative fit: central-difference `Ż` against `Θ(Z)Ξ`.
    #[serde(with = "json_f64")]
    pub r2: f64,
    /// Extrapolated trajectory against the extracted variables.
    #[serde(with = "json_f64")]
    pub r2_extrapolation: f64,
    pub l0: usize,
    #[serde(with = "json_f64")]
    pub rmse: f64,
    pub vps: usize,
    pub horizon: usize,
    pub recon_error: Option<f64>,
    pub smoothness: Option<f64>,
    pub divergence_step: Option<usize>,
    pub equations: Vec<String>,
    pub phase_portrait_path: Option<String>,
    pub trajectory_plot_path: Option<String>,
    pub model_path: Option<String>,
    pub tool_params: BTreeMap<String, serde_json::Value>,
}

impl DiagnosticReport {
    pub fn new(iteration: usize, mode: &str) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            iteration,
            mode: mode.into(),
            r2: f64::NEG_INFINITY,
            r2_extrapolation: f64::NEG_INFINITY,
            l0: 0,
            rmse: f64::INFINITY,
            vps: 0,
            horizon: 0,
            recon_error: None,
            smoothness: None,
            divergence_step: None,
            equations: Vec::new(),
            phase_portrait_path: None,
            trajectory_plot_path: None,
            model_path: None,
            tool_params: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `(vps, r2, -l0)` ranking key; larger is better.
    pub fn rank_key(&self) -> (usize, f64, i64) {
        (self.vps, if self.r2.is_nan() { f64::NEG_INFINITY } else { self.r2 }, -(self.l0 as i64))
    }

    /// Lexicographic comparison on [`rank_key`](Self::rank_key).
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (a, b) = (self.rank_key(), other.rank_key());
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

/// Data the report's plot and model artifacts are drawn from.
pub struct ReportArtifacts<'a> {
    /// Extracted (or observed) variables over the evaluation window.
    pub truth: &'a TrajectorySeries,
    /// Simulated trajectory of the discovered law.
    pub pred: &'a TrajectorySeries,
    pub model: Option<&'a SparseModel>,
    pub names: Vec<String>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Phase-portrait rows `pair,t,a,b` over every dimension pair; a
/// one-dimensional series is paired with its central-difference derivative.
pub fn phase_csv(traj: &TrajectorySeries, names: &[String]) -> String {
    let mut s = String::from("pair,t,a,b\n");
    for (label, pts) in phase_pairs(traj, names) {
        for (t, a, b) in pts {
            let _ = writeln!(s, "{label},{t:?},{a:?},{b:?}");
        }
    }
    s
}

fn phase_pairs(traj: &TrajectorySeries, names: &[String]) -> Vec<(String, Vec<(f64, f64, f64)>)> {
    let d = traj.dim();
    let t = traj.times();
    if d == 1 {
        let z = traj.column(0);
        let pts = (1..z.len().saturating_sub(1)).map(|k| (t[k], z[k], (z[k + 1] - z[k - 1]) / (2.0 * traj.dt()))).collect();
        return vec![(format!("{}:d{}/dt", names[0], names[0]), pts)];
    }
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let pts = traj.rows().zip(t).map(|(r, &tk)| (tk, r[i], r[j])).collect();
            out.push((format!("{}:{}", names[i], names[j]), pts));
        }
    }
    out
}

/// Overlay rows `t, pred_<name>, truth_<name>, …`; predicted samples missing
/// after a divergence are left empty.
pub fn overlay_csv(pred: &TrajectorySeries, truth: &TrajectorySeries, names: &[String]) -> String {
    let mut s = String::from("t");
    for n in names {
        let _ = write!(s, ",pred_{n},truth_{n}");
    }
    s.push('\n');
    for k in 0..truth.len() {
        let _ = write!(s, "{:?}", truth.times()[k]);
        for j in 0..truth.dim() {
            if k < pred.len() {
                let _ = write!(s, ",{:?},{:?}", pred.row(k)[j], truth.row(k)[j]);
            } else {
                let _ = write!(s, ",,{:?}", truth.row(k)[j]);
            }
        }
        s.push('\n');
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Minimal line chart as standalone SVG.
pub fn line_plot_svg(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>, bool)]) -> String {
    let (w, h, m) = (560.0, 400.0, 56.0);
    let pts = series.iter().flat_map(|(_, p, _)| p.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * m, h - 2.0 * m);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15" font-family="sans-serif">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" font-family="sans-serif">{}</text>"#, w / 2.0, h - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(ylabel)
    );
    for (v, x, y, anchor) in [(x0, m, h - m + 16.0, "start"), (x1, w - m, h - m + 16.0, "end")] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10" font-family="sans-serif">{v:.3}</text>"#);
    }
    for (v, y) in [(y0, h - m), (y1, m + 8.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" font-size="10" font-family="sans-serif">{v:.3}</text>"#, m - 4.0);
    }
    for (i, (label, p, dashed)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for &(x, y) in p.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
        }
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, d.trim_end());
        let ly = m + 16.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, w - m - 120.0, w - m - 100.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">{}</text>"#, w - m - 96.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `report.json`, `phase.{csv,svg}`, `overlay.{csv,svg}` and
/// `model.json` into `dir`; artifact paths in the returned report are
/// `rel_dir`-prefixed so a run directory can be moved intact.
pub fn emit_report(dir: &Path, rel_dir: &str, mut report: DiagnosticReport, art: &ReportArtifacts<'_>) -> Result<DiagnosticReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let rel = |name: &str| if rel_dir.is_empty() { name.to_string() } else { format!("{rel_dir}/{name}") };
    write_file(&dir.join("phase.csv"), &phase_csv(art.truth, &art.names))?;
    let mut phase_series = Vec::new();
    for (label, pts) in phase_pairs(art.truth, &art.names) {
        phase_series.push((format!("{label} extracted"), pts.iter().map(|p| (p.1, p.2)).collect(), false));
    }
    for (label, pts) in phase_pairs(art.pred, &art.names) {
        phase_series.push((format!("{label} model"), pts.iter().map(|p| (p.1, p.2)).collect(), true));
    }
    write_file(&dir.join("phase.svg"), &line_plot_svg("Phase portrait", "a", "b", &phase_series))?;
    write_file(&dir.join("overlay.csv"), &overlay_csv(art.pred, art.truth, &art.names))?;
    let mut overlay = Vec::new();
    for (j, n) in art.names.iter().enumerate() {
        overlay.push((format!("{n} extracted"), art.truth.rows().zip(art.truth.times()).map(|(r, &t)| (t, r[j])).collect(), false));
        overlay.push((format!("{n} model"), art.pred.rows().zip(art.pred.times()).map(|(r, &t)| (t, r[j])).collect(), true));
    }
    write_file(&dir.join("overlay.svg"), &line_plot_svg("Extrapolation", "t", "state", &overlay))?;
    if let Some(model) = art.model {
        write_file(&dir.join("model.json"), &model.to_json()?)?;
        report.model_path = Some(rel("model.json"));
    }
    report.phase_portrait_path = Some(rel("phase.svg"));
    report.trajectory_plot_path = Some(rel("overlay.svg"));
    write_file(&dir.join("report.json"), &report.to_json()?)?;
    Ok(report)
}
