use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled low-dimensional states, stored row-major (`len × dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeries {
    times: Vec<f64>,
    dt: f64,
    dim: usize,
    states: Vec<f64>,
    /// Sample index at which an integration blew up; the series is truncated there.
    divergence: Option<usize>,
}

fn check_uniform(times: &[f64], dt: f64) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        let tol = 1e-12 * dt.max(w[1].abs()).max(1.0);
        if !(step > 0.0) || (step - dt).abs() > tol {
            return Err(Error::NonUniformTime { index: i + 1 });
        }
    }
    Ok(())
}

impl TrajectorySeries {
    /// Builds a series from explicit sample times.
    pub fn new(times: Vec<f64>, dim: usize, states: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::pre("state dimension must be at least 1"));
        }
        if states.len() != times.len() * dim {
            return Err(Error::Shape(format!(
                "{} state values for {} samples of dimension {dim}",
                states.len(),
                times.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::pre("explicit-time series needs at least 2 samples"));
        }
        let dt = times[1] - times[0];
        check_uniform(&times, dt)?;
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::pre("trajectory contains non-finite values"));
        }
        Ok(Self { times, dt, dim, states, divergence: None })
    }

    /// Builds a series with `t_k = t0 + k·dt`.
    pub fn uniform(t0: f64, dt: f64, dim: usize, states: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::pre(format!("dt must be positive, got {dt}")));
        }
        if dim == 0 || states.len() % dim != 0 {
            return Err(Error::Shape(format!("{} values is not a multiple of dim {dim}", states.len())));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::pre("trajectory contains non-finite values"));
        }
        let n = states.len() / dim;
        let times = (0..n).map(|k| t0 + k as f64 * dt).collect();
        Ok(Self { times, dt, dim, states, divergence: None })
    }

    pub(crate) fn with_divergence(mut self, step: Option<usize>) -> Self {
        self.divergence = step;
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn divergence(&self) -> Option<usize> {
        self.divergence
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Samples `start..end` as a new series (times preserved).
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::pre(format!("slice {start}..{end} out of range for {} samples", self.len())));
        }
        Ok(Self {
            times: self.times[start..end].to_vec(),
            dt: self.dt,
            dim: self.dim,
            states: self.states[start * self.dim..end * self.dim].to_vec(),
            divergence: None,
        })
    }

    /// Renders `t, z1, …, zd` CSV with round-trip float formatting.
    pub fn to_csv_string(&self, names: Option<&[String]>) -> String {
        let mut out = String::from("t");
        for j in 0..self.dim {
            match names {
                Some(n) => write!(out, ",{}", n[j]).unwrap(),
                None => write!(out, ",z{}", j + 1).unwrap(),
            }
        }
        out.push('\n');
        for (k, row) in self.rows().enumerate() {
            write!(out, "{:?}", self.times[k]).unwrap();
            for v in row {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string(None))
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::pre("empty CSV"))?;
        let dim = header.split(',').count().saturating_sub(1);
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Shape(format!("CSV row {} has {} fields, expected {}", i + 1, fields.len(), dim + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::pre(format!("CSV row {}: bad number `{s}`: {e}", i + 1)))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                states.push(parse(f)?);
            }
        }
        Self::new(times, dim, states)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_csv_str(&text)
    }
}

/// Regular periodic grid; `x` runs along columns, `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    pub fn square(n: usize, length: f64) -> Self {
        let h = length / n as f64;
        Self { height: n, width: n, dx: h, dy: h }
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    /// Row-major values; `frames × height × width` in a series, `height × width` in a snapshot.
    pub data: Vec<f64>,
}

/// One time slice of a multi-channel field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub grid: Grid,
    pub channels: Vec<Channel>,
}

impl FieldSnapshot {
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find(|c| c.name == name).map(|c| c.data.as_slice())
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub times: Vec<f64>,
    pub dt: f64,
    pub grid: Grid,
    pub channels: Vec<Channel>,
    pub divergence: Option<usize>,
}

impl FieldSeries {
    pub fn new(t0: f64, dt: f64, grid: Grid, channels: Vec<Channel>) -> Result<Self> {
        if !(grid.dx > 0.0 && grid.dy > 0.0) {
            return Err(Error::pre("grid spacing must be positive"));
        }
        let first = channels.first().ok_or_else(|| Error::pre("field series needs at least one channel"))?;
        let cells = grid.cells();
        if cells == 0 || first.data.len() % cells != 0 {
            return Err(Error::Shape(format!("channel `{}` length {} not a multiple of {cells}", first.name, first.data.len())));
        }
        let n = first.data.len() / cells;
        for c in &channels {
            if c.data.len() != n * cells {
                return Err(Error::Shape(format!("channel `{}` has {} values, expected {}", c.name, c.data.len(), n * cells)));
            }
            if c.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::pre(format!("channel `{}` contains non-finite values", c.name)));
            }
        }
        let times = (0..n).map(|k| t0 + k as f64 * dt).collect();
        Ok(Self { times, dt, grid, channels, divergence: None })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn frame(&self, channel: usize, k: usize) -> &[f64] {
        let cells = self.grid.cells();
        &self.channels[channel].data[k * cells..(k + 1) * cells]
    }

    pub fn snapshot(&self, k: usize) -> FieldSnapshot {
        FieldSnapshot {
            grid: self.grid,
            channels: (0..self.channels.len())
                .map(|c| Channel { name: self.channels[c].name.clone(), data: self.frame(c, k).to_vec() })
                .collect(),
        }
    }

    /// Frames `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::pre(format!("slice {start}..{end} out of range for {} frames", self.len())));
        }
        let cells = self.grid.cells();
        let channels = self
            .channels
            .iter()
            .map(|c| Channel { name: c.name.clone(), data: c.data[start * cells..end * cells].to_vec() })
            .collect();
        Ok(Self { times: self.times[start..end].to_vec(), dt: self.dt, grid: self.grid, channels, divergence: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let s = TrajectorySeries::uniform(0.0, 0.01, 2, vec![0.1, 1.0 / 3.0, -2.5e-7, 7.0, 1e300, -0.0]).unwrap();
        let back = TrajectorySeries::from_csv_str(&s.to_csv_string(None)).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rejects_non_uniform_times() {
        let err = TrajectorySeries::new(vec![0.0, 0.1, 0.25], 1, vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::NonUniformTime { index: 2 }));
    }

    #[test]
    fn rejects_nan() {
        assert!(TrajectorySeries::uniform(0.0, 0.1, 1, vec![0.0, f64::NAN]).is_err());
    }
}
