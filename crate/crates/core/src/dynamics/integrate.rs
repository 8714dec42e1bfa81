//! Fixed-step classical Runge–Kutta integration of ODE and method-of-lines PDE systems.

use super::{Channel, FieldPoint, FieldSeries, FieldSnapshot, Rhs, SystemSpec, TrajectorySeries};
use crate::error::{Error, Result};
use crate::extract::stencil;

/// States beyond this magnitude (or non-finite) end an integration.
pub const DIVERGENCE_BOUND: f64 = 1e6;

fn diverged(y: &[f64]) -> bool {
    y.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    fn step(&mut self, f: &mut impl FnMut(&[f64], &mut [f64]), y: &mut [f64], dt: f64) {
        let n = y.len();
        f(y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * dt * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * dt * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + dt * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates `dz/dt = f(z)` with classical RK4, stopping at the first
/// divergent state. Returns the samples before divergence and its step index.
pub fn rk4_trajectory(
    mut f: impl FnMut(&[f64], &mut [f64]),
    z0: &[f64],
    dt: f64,
    steps: usize,
) -> (Vec<f64>, Option<usize>) {
    let d = z0.len();
    let mut out = Vec::with_capacity((steps + 1) * d);
    out.extend_from_slice(z0);
    let mut y = z0.to_vec();
    let mut rk = Rk4::new(d);
    for k in 1..=steps {
        rk.step(&mut f, &mut y, dt);
        if diverged(&y) {
            return (out, Some(k));
        }
        out.extend_from_slice(&y);
    }
    (out, None)
}

fn check_step_args(dt: f64, steps: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::pre(format!("dt must be positive and finite, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::pre("steps must be at least 1"));
    }
    Ok(())
}

/// Integrates an ODE system; the result has `steps + 1` samples unless it diverged.
pub fn integrate_ode(spec: &SystemSpec, z0: &[f64], dt: f64, steps: usize) -> Result<TrajectorySeries> {
    let Rhs::Ode(f) = &spec.rhs else {
        return Err(Error::pre(format!("`{}` is not an ODE system", spec.name)));
    };
    check_step_args(dt, steps)?;
    if z0.len() != spec.state_dim {
        return Err(Error::Shape(format!("z0 has {} entries, system `{}` has {}", z0.len(), spec.name, spec.state_dim)));
    }
    if z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::pre("z0 must be finite"));
    }
    let (states, div) = rk4_trajectory(|z, dz| f(z, dz), z0, dt, steps);
    Ok(TrajectorySeries::uniform(0.0, dt, spec.state_dim, states)?.with_divergence(div))
}

pub const MIN_PDE_GRID: usize = 16;

/// Method-of-lines integration on a periodic grid: stencil operators in
/// space, RK4 in time. Returns the full field history.
pub fn integrate_pde(spec: &SystemSpec, initial: &FieldSnapshot, dt: f64, steps: usize) -> Result<FieldSeries> {
    let Rhs::Pde { channels, operators, f, .. } = &spec.rhs else {
        return Err(Error::pre(format!("`{}` is not a PDE system", spec.name)));
    };
    check_step_args(dt, steps)?;
    let grid = initial.grid;
    if grid.height < MIN_PDE_GRID || grid.width < MIN_PDE_GRID {
        return Err(Error::pre(format!(
            "grid {}x{} below the {MIN_PDE_GRID}x{MIN_PDE_GRID} minimum",
            grid.height, grid.width
        )));
    }
    let cells = grid.cells();
    let nc = channels.len();
    let mut y = Vec::with_capacity(nc * cells);
    for name in channels {
        let data = initial
            .channel(name)
            .ok_or_else(|| Error::pre(format!("initial field lacks channel `{name}`")))?;
        if data.len() != cells {
            return Err(Error::Shape(format!("channel `{name}` has {} cells, grid has {cells}", data.len())));
        }
        y.extend_from_slice(data);
    }

    let zeros = vec![0.0; nc * cells];
    let mut gx = if operators.gradient { zeros.clone() } else { Vec::new() };
    let mut gy = gx.clone();
    let mut lap = if operators.laplacian || operators.biharmonic { zeros.clone() } else { Vec::new() };
    let mut bih = if operators.biharmonic { zeros.clone() } else { Vec::new() };
    let zero_c = vec![0.0; nc];
    let mut rhs = |state: &[f64], out: &mut [f64]| {
        for c in 0..nc {
            let u = &state[c * cells..(c + 1) * cells];
            let r = c * cells..(c + 1) * cells;
            if operators.gradient {
                stencil::d_dx(u, &grid, &mut gx[r.clone()]);
                stencil::d_dy(u, &grid, &mut gy[r.clone()]);
            }
            if !lap.is_empty() {
                stencil::laplacian(u, &grid, &mut lap[r.clone()]);
            }
            if operators.biharmonic {
                let (l, b) = (&lap[r.clone()], &mut bih[r]);
                stencil::laplacian(l, &grid, b);
            }
        }
        let mut vals = vec![0.0; nc];
        let mut px = vec![0.0; nc];
        let mut py = vec![0.0; nc];
        let mut pl = vec![0.0; nc];
        let mut pb = vec![0.0; nc];
        let mut res = vec![0.0; nc];
        for p in 0..cells {
            for c in 0..nc {
                let idx = c * cells + p;
                vals[c] = state[idx];
                if operators.gradient {
                    px[c] = gx[idx];
                    py[c] = gy[idx];
                }
                if operators.laplacian {
                    pl[c] = lap[idx];
                }
                if operators.biharmonic {
                    pb[c] = bih[idx];
                }
            }
            let point = FieldPoint {
                values: &vals,
                grad_x: if operators.gradient { &px } else { &zero_c },
                grad_y: if operators.gradient { &py } else { &zero_c },
                laplacian: if operators.laplacian { &pl } else { &zero_c },
                biharmonic: if operators.biharmonic { &pb } else { &zero_c },
            };
            f(&point, &mut res);
            for c in 0..nc {
                out[c * cells + p] = res[c];
            }
        }
    };
    let (states, div) = rk4_trajectory(&mut rhs, &y, dt, steps);
    let n = states.len() / (nc * cells);
    let mut chans: Vec<Channel> =
        channels.iter().map(|name| Channel { name: name.clone(), data: Vec::with_capacity(n * cells) }).collect();
    for frame in states.chunks_exact(nc * cells) {
        for (c, ch) in chans.iter_mut().enumerate() {
            ch.data.extend_from_slice(&frame[c * cells..(c + 1) * cells]);
        }
    }
    let mut series = FieldSeries::new(0.0, dt, grid, chans)?;
    series.divergence = div;
    Ok(series)
}
