use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vidlaw::dynamics::builtin_system_with;
use vidlaw::planner::Mode;

use crate::{discover, generate, CliConfig};

/// One seed of a sweep; failed seeds keep their error and no metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub status: String,
    pub termination: Option<String>,
    /// `None` when supports are not comparable (latent coordinates).
    pub terms_found: Option<bool>,
    pub false_positives: Option<usize>,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub vps: Option<usize>,
    pub l0: Option<usize>,
    pub equations: Vec<String>,
    pub error: Option<String>,
}

/// `(terms found, false positives)` of discovered supports against the truth:
/// found means every true feature is present in its equation.
pub fn support_scores(truth: &[Vec<String>], found: &[Vec<String>]) -> (bool, usize) {
    let mut all = truth.len() == found.len();
    let mut fp = 0;
    for (t, f) in truth.iter().zip(found) {
        all &= t.iter().all(|x| f.contains(x));
        fp += f.iter().filter(|x| !t.contains(x)).count();
    }
    (all, fp)
}

fn run_seed(base: &CliConfig, seed: u64, out: &Path) -> Result<SweepRow> {
    let mut cfg = base.clone();
    cfg.set_seed(seed);
    let dir = out.join(format!("seed_{seed}"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let data = dir.join("data.seq");
    generate(&cfg, &data)?;
    let outcome = discover(&data, &cfg, &dir.join("run"))?;
    let s = &outcome.summary;
    let spec = builtin_system_with(&cfg.dynamics.system, &cfg.dynamics.params)?;
    let scores = match (cfg.planner.mode, outcome.history.final_model()) {
        (Mode::Representation, _) | (_, None) => None,
        (_, Some(m)) => Some(support_scores(&spec.true_support(), &m.supports())),
    };
    let m = s.metrics;
    Ok(SweepRow {
        seed,
        status: if s.error.is_some() { "failed".into() } else { "ok".into() },
        termination: Some(s.termination_reason.as_str().into()),
        terms_found: scores.map(|x| x.0),
        false_positives: scores.map(|x| x.1),
        r2: m.map(|m| m.r2_extrapolation),
        rmse: m.map(|m| m.rmse),
        vps: m.map(|m| m.vps),
        l0: m.map(|m| m.l0),
        equations: s.equations.clone(),
        error: s.error.clone(),
    })
}

/// Generates and discovers once per seed, `jobs` seeds at a time, each in
/// `out/seed_<s>/`. Writes `sweep.csv`, `summary.csv` and `summary.md`.
pub fn sweep(cfg: &CliConfig, seeds: &[u64], jobs: usize, out: &Path) -> Result<Vec<SweepRow>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let rows: Vec<SweepRow> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                run_seed(cfg, seed, out).unwrap_or_else(|e| SweepRow {
                    seed,
                    status: "failed".into(),
                    termination: None,
                    terms_found: None,
                    false_positives: None,
                    r2: None,
                    rmse: None,
                    vps: None,
                    l0: None,
                    equations: vec![],
                    error: Some(format!("{e:#}")),
                })
            })
            .collect()
    });
    let (csv, summary_csv, md) = sweep_tables(&cfg.dynamics.system, cfg.evaluate.vps_eps, &rows);
    std::fs::write(out.join("sweep.csv"), csv)?;
    std::fs::write(out.join("summary.csv"), summary_csv)?;
    std::fs::write(out.join("summary.md"), md)?;
    Ok(rows)
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() < 2 { 0.0 } else { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    Some((mean, std))
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-seed CSV, summary CSV and Markdown table.
pub fn sweep_tables(system: &str, vps_eps: f64, rows: &[SweepRow]) -> (String, String, String) {
    let mut csv = String::from("seed,status,termination,terms_found,false_positives,r2,rmse,vps,l0,equations,error\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.status,
            opt(&r.termination),
            opt(&r.terms_found),
            opt(&r.false_positives),
            opt(&r.r2),
            opt(&r.rmse),
            opt(&r.vps),
            opt(&r.l0),
            csv_field(&r.equations.join("; ")),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    let col = |f: &dyn Fn(&SweepRow) -> Option<f64>| mean_std(&rows.iter().filter_map(f).collect::<Vec<_>>());
    let stats = [
        ("Terms Found", col(&|r| r.terms_found.map(|b| if b { 1.0 } else { 0.0 }))),
        ("False Positives", col(&|r| r.false_positives.map(|v| v as f64))),
        ("R2", col(&|r| r.r2)),
        ("RMSE", col(&|r| r.rmse)),
        (&*format!("VPS@{vps_eps}"), col(&|r| r.vps.map(|v| v as f64))),
    ]
    .map(|(k, v)| (k.to_string(), v));
    let ok = rows.iter().filter(|r| r.status == "ok").count();
    let mut summary = String::from("metric,mean,std,n\n");
    for (name, s) in &stats {
        match s {
            Some((m, sd)) => {
                let _ = writeln!(summary, "{name},{m},{sd},{ok}");
            }
            None => {
                let _ = writeln!(summary, "{name},,,0");
            }
        }
    }
    let fmt = |s: &Option<(f64, f64)>, digits: usize| match s {
        Some((m, sd)) => format!("{m:.digits$} ± {sd:.digits$}"),
        None => "n/a".into(),
    };
    let mut md = String::new();
    let _ = writeln!(md, "| System | {} | {} | R² | RMSE | VPS@{vps_eps} | Seeds ok |", stats[0].0, stats[1].0);
    md.push_str("|---|---|---|---|---|---|---|\n");
    let _ = writeln!(
        md,
        "| {system} | {} | {} | {} | {} | {} | {ok}/{} |",
        fmt(&stats[0].1, 2),
        fmt(&stats[1].1, 2),
        fmt(&stats[2].1, 4),
        fmt(&stats[3].1, 4),
        fmt(&stats[4].1, 0),
        rows.len()
    );
    (csv, summary, md)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter().map(|d| d.iter().map(|x| x.to_string()).collect()).collect()
    }

    #[test]
    fn support_scoring() {
        let truth = s(&[&["z1", "z2"], &["z1", "z2"]]);
        assert_eq!(support_scores(&truth, &s(&[&["z1", "z2"], &["z1", "z2"]])), (true, 0));
        assert_eq!(support_scores(&truth, &s(&[&["z1", "z2", "z1^3"], &["z2"]])), (false, 1));
    }

    #[test]
    fn single_seed_has_zero_std() {
        let row = SweepRow {
            seed: 0,
            status: "ok".into(),
            termination: Some("accepted".into()),
            terms_found: Some(true),
            false_positives: Some(0),
            r2: Some(0.99),
            rmse: Some(0.01),
            vps: Some(1000),
            l0: Some(4),
            equations: vec!["dz1/dt = z2".into()],
            error: None,
        };
        let (_, summary, md) = sweep_tables("linear", 0.5, &[row]);
        for line in summary.lines().skip(1) {
            assert_eq!(line.split(',').nth(2), Some("0"), "{line}");
        }
        assert!(md.contains("1000 ± 0"), "{md}");
    }
}
