//! Central-difference stencils on periodic grids.
//!
//! Every kernel writes into a caller-provided buffer of `grid.cells()` values
//! and wraps indices at the boundaries. The same kernels drive the PDE
//! integrator, pixel-level feature extraction and the vorticity metric, so
//! generated data and extracted operators share one differentiation
//! convention.

use std::collections::BTreeMap;

use crate::dynamics::{FieldSeries, Grid};
use crate::error::{Error, Result};

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Applies `f(center, offset)` over every cell where `offset(di, dj)` reads a
/// periodic neighbour.
#[inline]
fn for_each_cell(grid: &Grid, u: &[f64], out: &mut [f64], f: impl Fn(&dyn Fn(isize, isize) -> f64) -> f64) {
    let (h, w) = (grid.height, grid.width);
    for i in 0..h {
        for j in 0..w {
            let at = |di: isize, dj: isize| u[wrap(i as isize + di, h) * w + wrap(j as isize + dj, w)];
            out[i * w + j] = f(&at);
        }
    }
}

/// `∂u/∂x` with the `[-1, 0, 1] / 2Δx` stencil.
pub fn d_dx(u: &[f64], grid: &Grid, out: &mut [f64]) {
    let c = 0.5 / grid.dx;
    for_each_cell(grid, u, out, |at| c * (at(0, 1) - at(0, -1)));
}

/// `∂u/∂y` with the `[-1, 0, 1] / 2Δy` stencil (rows are `y`).
pub fn d_dy(u: &[f64], grid: &Grid, out: &mut [f64]) {
    let c = 0.5 / grid.dy;
    for_each_cell(grid, u, out, |at| c * (at(1, 0) - at(-1, 0)));
}

pub fn d_xx(u: &[f64], grid: &Grid, out: &mut [f64]) {
    let c = 1.0 / (grid.dx * grid.dx);
    for_each_cell(grid, u, out, |at| c * (at(0, 1) - 2.0 * at(0, 0) + at(0, -1)));
}

pub fn d_yy(u: &[f64], grid: &Grid, out: &mut [f64]) {
    let c = 1.0 / (grid.dy * grid.dy);
    for_each_cell(grid, u, out, |at| c * (at(1, 0) - 2.0 * at(0, 0) + at(-1, 0)));
}

/// Five-point Laplacian.
pub fn laplacian(u: &[f64], grid: &Grid, out: &mut [f64]) {
    let (h, w) = (grid.height, grid.width);
    let cx = 1.0 / (grid.dx * grid.dx);
    let cy = 1.0 / (grid.dy * grid.dy);
    for i in 0..h {
        let up = if i == 0 { h - 1 } else { i - 1 } * w;
        let down = if i + 1 == h { 0 } else { i + 1 } * w;
        let row = i * w;
        for j in 0..w {
            let left = if j == 0 { w - 1 } else { j - 1 };
            let right = if j + 1 == w { 0 } else { j + 1 };
            let c = u[row + j];
            out[row + j] = cx * (u[row + left] - 2.0 * c + u[row + right]) + cy * (u[up + j] - 2.0 * c + u[down + j]);
        }
    }
}

/// Biharmonic operator as the five-point Laplacian applied twice.
pub fn biharmonic(u: &[f64], grid: &Grid, out: &mut [f64]) {
    let mut tmp = vec![0.0; u.len()];
    laplacian(u, grid, &mut tmp);
    laplacian(&tmp, grid, out);
}

/// The explicit 13-point form of `Δ∘Δ` (`∂⁴x + 2∂²x∂²y + ∂⁴y`).
pub fn biharmonic_direct(u: &[f64], grid: &Grid, out: &mut [f64]) {
    let ax = 1.0 / grid.dx.powi(4);
    let ay = 1.0 / grid.dy.powi(4);
    let axy = 2.0 / (grid.dx * grid.dx * grid.dy * grid.dy);
    for_each_cell(grid, u, out, |at| {
        let xxxx = at(0, 2) - 4.0 * at(0, 1) + 6.0 * at(0, 0) - 4.0 * at(0, -1) + at(0, -2);
        let yyyy = at(2, 0) - 4.0 * at(1, 0) + 6.0 * at(0, 0) - 4.0 * at(-1, 0) + at(-2, 0);
        let xxyy = at(1, 1) + at(1, -1) + at(-1, 1) + at(-1, -1) - 2.0 * (at(0, 1) + at(0, -1) + at(1, 0) + at(-1, 0))
            + 4.0 * at(0, 0);
        ax * xxxx + ay * yyyy + axy * xxyy
    });
}

/// Spatial operator a feature column is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operator {
    Identity,
    Dx,
    Dy,
    Dxx,
    Dyy,
    Laplacian,
    Biharmonic,
}

impl Operator {
    pub fn apply(self, u: &[f64], grid: &Grid, out: &mut [f64]) {
        match self {
            Operator::Identity => out.copy_from_slice(u),
            Operator::Dx => d_dx(u, grid, out),
            Operator::Dy => d_dy(u, grid, out),
            Operator::Dxx => d_xx(u, grid, out),
            Operator::Dyy => d_yy(u, grid, out),
            Operator::Laplacian => laplacian(u, grid, out),
            Operator::Biharmonic => biharmonic(u, grid, out),
        }
    }

    /// Canonical feature name of this operator applied to `channel`.
    pub fn feature_name(self, channel: &str) -> String {
        match self {
            Operator::Identity => channel.to_string(),
            Operator::Dx => format!("{channel}_x"),
            Operator::Dy => format!("{channel}_y"),
            Operator::Dxx => format!("{channel}_xx"),
            Operator::Dyy => format!("{channel}_yy"),
            Operator::Laplacian => format!("Δ{channel}"),
            Operator::Biharmonic => format!("Δ²{channel}"),
        }
    }

    /// Parses a feature name against the known channels.
    pub fn parse(name: &str, channels: &[String]) -> Option<(Operator, usize)> {
        const OPS: [Operator; 7] = [
            Operator::Identity,
            Operator::Dx,
            Operator::Dy,
            Operator::Dxx,
            Operator::Dyy,
            Operator::Laplacian,
            Operator::Biharmonic,
        ];
        channels.iter().enumerate().find_map(|(c, ch)| {
            OPS.iter().find(|op| op.feature_name(ch) == name).map(|&op| (op, c))
        })
    }
}

/// Full-grid operator tensors keyed by feature name, each `frames × H × W`.
#[derive(Debug, Clone)]
pub struct FeatureTensors {
    pub grid: Grid,
    pub dt: f64,
    pub frames: usize,
    pub names: Vec<String>,
    pub values: BTreeMap<String, Vec<f64>>,
}

impl FeatureTensors {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.values.get(name).map(Vec::as_slice)
    }
}

/// Evaluates the requested operator features on every frame of `fields`.
pub fn apply_stencils(fields: &FieldSeries, requested: &[String]) -> Result<FeatureTensors> {
    let channels = fields.channel_names();
    let mut plan = Vec::with_capacity(requested.len());
    for name in requested {
        let (op, c) = Operator::parse(name, &channels).ok_or_else(|| Error::UnknownFeature(name.clone()))?;
        let min = match op {
            Operator::Biharmonic => 5,
            Operator::Identity => 1,
            _ => 3,
        };
        if fields.grid.height < min || fields.grid.width < min {
            return Err(Error::pre(format!(
                "grid {}x{} too small for `{name}` (needs at least {min}x{min})",
                fields.grid.height, fields.grid.width
            )));
        }
        plan.push((name.clone(), op, c));
    }
    let cells = fields.grid.cells();
    let n = fields.len();
    let mut values = BTreeMap::new();
    for (name, op, c) in &plan {
        let mut data = vec![0.0; n * cells];
        for (k, out) in data.chunks_exact_mut(cells).enumerate() {
            op.apply(fields.frame(*c, k), &fields.grid, out);
        }
        values.insert(name.clone(), data);
    }
    Ok(FeatureTensors { grid: fields.grid, dt: fields.dt, frames: n, names: requested.to_vec(), values })
}
