//! Registry of the built-in ground-truth systems.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Channel, FieldSnapshot, Grid};
use crate::error::{Error, Result};

pub type OdeFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type PdeFn = Arc<dyn Fn(&FieldPoint<'_>, &mut [f64]) + Send + Sync>;
type InitFn = Arc<dyn Fn(&Grid, u64) -> Vec<Channel> + Send + Sync>;

/// Which spatial operators a PDE right-hand side reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OperatorSet {
    pub gradient: bool,
    pub laplacian: bool,
    pub biharmonic: bool,
}

/// Per-cell inputs of a PDE right-hand side; one entry per channel.
/// Operators not listed in the system's [`OperatorSet`] read as zero.
#[derive(Debug)]
pub struct FieldPoint<'a> {
    pub values: &'a [f64],
    pub grad_x: &'a [f64],
    pub grad_y: &'a [f64],
    pub laplacian: &'a [f64],
    pub biharmonic: &'a [f64],
}

#[derive(Clone)]
pub enum Rhs {
    Ode(OdeFn),
    Pde { channels: Vec<String>, operators: OperatorSet, f: PdeFn, init: Option<InitFn> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Ode,
    Pde,
}

/// Ground-truth term `(canonical feature name, coefficient)` lists, one per state dimension.
pub type TrueTerms = Vec<Vec<(String, f64)>>;

#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub state_dim: usize,
    pub state_names: Vec<String>,
    pub params: BTreeMap<String, f64>,
    pub recommended_dt: f64,
    /// Physical side length of the square periodic domain (PDE systems).
    pub recommended_domain: Option<f64>,
    pub default_z0: Vec<f64>,
    pub truth: TrueTerms,
    pub rhs: Rhs,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("kind", &self.kind())
            .field("state_dim", &self.state_dim)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl SystemSpec {
    pub fn kind(&self) -> SystemKind {
        match self.rhs {
            Rhs::Ode(_) => SystemKind::Ode,
            Rhs::Pde { .. } => SystemKind::Pde,
        }
    }

    /// Evaluates an ODE right-hand side.
    pub fn eval_ode(&self, z: &[f64]) -> Result<Vec<f64>> {
        match &self.rhs {
            Rhs::Ode(f) => {
                let mut out = vec![0.0; self.state_dim];
                f(z, &mut out);
                Ok(out)
            }
            Rhs::Pde { .. } => Err(Error::pre(format!("`{}` is a PDE system", self.name))),
        }
    }

    /// Canonical initial field for PDE systems on an `n × n` grid.
    pub fn initial_field(&self, n: usize, seed: u64) -> Result<FieldSnapshot> {
        let Rhs::Pde { init: Some(init), .. } = &self.rhs else {
            return Err(Error::pre(format!("`{}` has no initial-field generator", self.name)));
        };
        let length = self.recommended_domain.unwrap_or(n as f64);
        let grid = Grid::square(n, length);
        Ok(FieldSnapshot { grid, channels: init(&grid, seed) })
    }

    /// True support (feature names) per state dimension.
    pub fn true_support(&self) -> Vec<Vec<String>> {
        self.truth.iter().map(|terms| terms.iter().map(|(n, _)| n.clone()).collect()).collect()
    }
}

pub const SYSTEM_NAMES: [&str; 9] = [
    "linear",
    "cubic",
    "circular",
    "vdp",
    "glider",
    "lambda_omega",
    "brusselator",
    "fitzhugh_nagumo",
    "swift_hohenberg",
];

/// Looks up a built-in system with its canonical parameters.
pub fn builtin_system(name: &str) -> Result<SystemSpec> {
    builtin_system_with(name, &BTreeMap::new())
}

/// Looks up a built-in system, overriding named parameters.
pub fn builtin_system_with(name: &str, overrides: &BTreeMap<String, f64>) -> Result<SystemSpec> {
    let defaults: &[(&str, f64)] = match name {
        "linear" | "cubic" => &[("damping", 0.1), ("coupling", 2.0)],
        "circular" => &[("omega", 1.0)],
        "vdp" => &[("mu", 2.0)],
        "glider" => &[("drag", 0.05)],
        "lambda_omega" => &[("beta", 1.0), ("d_u", 0.1), ("d_v", 0.1), ("length", 20.0)],
        "brusselator" => &[("a", 1.0), ("b", 2.5), ("d_u", 0.2), ("d_v", 0.1), ("length", 32.0)],
        "fitzhugh_nagumo" => {
            &[("d_u", 1.0), ("d_v", 4.0), ("epsilon", 0.1), ("a0", -0.03), ("a1", 2.0), ("length", 64.0)]
        }
        "swift_hohenberg" => &[("r", 0.2), ("length", 16.0 * PI)],
        _ => {
            return Err(Error::UnknownSystem {
                name: name.to_string(),
                valid: SYSTEM_NAMES.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    let mut params: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in overrides {
        if !params.contains_key(k) {
            return Err(Error::Config(format!(
                "system `{name}` has no parameter `{k}` (parameters: {})",
                params.keys().cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        params.insert(k.clone(), *v);
    }
    let p = |k: &str| params[k];
    let zn = || vec!["z1".to_string(), "z2".to_string()];
    let uv = || vec!["u".to_string(), "v".to_string()];
    let terms = |t: &[&[(&str, f64)]]| -> TrueTerms {
        t.iter().map(|dim| dim.iter().map(|(n, c)| (n.to_string(), *c)).collect()).collect()
    };

    let spec = match name {
        "linear" | "cubic" => {
            let (a, b) = (p("damping"), p("coupling"));
            let cubic = name == "cubic";
            let f: OdeFn = if cubic {
                Arc::new(move |z, dz| {
                    let (x3, y3) = (z[0].powi(3), z[1].powi(3));
                    dz[0] = -a * x3 + b * y3;
                    dz[1] = -b * x3 - a * y3;
                })
            } else {
                Arc::new(move |z, dz| {
                    dz[0] = -a * z[0] + b * z[1];
                    dz[1] = -b * z[0] - a * z[1];
                })
            };
            let (x, y) = if cubic { ("z1^3", "z2^3") } else { ("z1", "z2") };
            SystemSpec {
                name: name.into(),
                state_dim: 2,
                state_names: zn(),
                recommended_dt: 0.01,
                recommended_domain: None,
                default_z0: if cubic { vec![1.0, 0.0] } else { vec![2.0, 0.0] },
                truth: terms(&[&[(x, -a), (y, b)], &[(x, -b), (y, -a)]]),
                rhs: Rhs::Ode(f),
                params,
            }
        }
        "circular" => {
            let w = p("omega");
            SystemSpec {
                name: name.into(),
                state_dim: 2,
                state_names: zn(),
                recommended_dt: 0.01,
                recommended_domain: None,
                default_z0: vec![1.0, 0.0],
                truth: terms(&[&[("z2", -w)], &[("z1", w)]]),
                rhs: Rhs::Ode(Arc::new(move |z, dz| {
                    dz[0] = -w * z[1];
                    dz[1] = w * z[0];
                })),
                params,
            }
        }
        "vdp" => {
            let mu = p("mu");
            SystemSpec {
                name: name.into(),
                state_dim: 2,
                state_names: zn(),
                recommended_dt: 0.01,
                recommended_domain: None,
                default_z0: vec![1.0, 1.0],
                truth: terms(&[&[("z2", 1.0)], &[("z1", -1.0), ("z2", mu), ("z1^2*z2", -mu)]]),
                rhs: Rhs::Ode(Arc::new(move |z, dz| {
                    dz[0] = z[1];
                    dz[1] = mu * (1.0 - z[0] * z[0]) * z[1] - z[0];
                })),
                params,
            }
        }
        "glider" => {
            let d = p("drag");
            SystemSpec {
                name: name.into(),
                state_dim: 2,
                state_names: zn(),
                // A 200-step window then spans about two phugoid periods.
                recommended_dt: 0.05,
                recommended_domain: None,
                default_z0: vec![1.4, 0.0],
                // θ̇ carries cos θ / v, which no polynomial/trig library column represents.
                truth: terms(&[&[("sin(z2)", -1.0), ("z1^2", -d)], &[("z1", 1.0), ("cos(z2)/z1", -1.0)]]),
                rhs: Rhs::Ode(Arc::new(move |z, dz| {
                    let (v, th) = (z[0], z[1]);
                    dz[0] = -th.sin() - d * v * v;
                    dz[1] = v - th.cos() / v;
                })),
                params,
            }
        }
        "lambda_omega" => {
            let (beta, du, dv) = (p("beta"), p("d_u"), p("d_v"));
            SystemSpec {
                name: name.into(),
                state_dim: 2,
                state_names: uv(),
                recommended_dt: 0.05,
                recommended_domain: Some(p("length")),
                default_z0: vec![],
                truth: terms(&[
                    &[("u", 1.0), ("u^3", -1.0), ("u^2*v", beta), ("u*v^2", -1.0), ("v^3", beta), ("Δu", du)],
                    &[("v", 1.0), ("u^3", -beta), ("u^2*v", -1.0), ("u*v^2", -beta), ("v^3", -1.0), ("Δv", dv)],
                ]),
                rhs: Rhs::Pde {
                    channels: uv(),
                    operators: OperatorSet { laplacian: true, ..Default::default() },
                    f: Arc::new(move |pt, out| {
                        let (u, v) = (pt.values[0], pt.values[1]);
                        let a2 = u * u + v * v;
                        let lambda = 1.0 - a2;
                        let omega = -beta * a2;
                        out[0] = du * pt.laplacian[0] + lambda * u - omega * v;
                        out[1] = dv * pt.laplacian[1] + omega * u + lambda * v;
                    }),
                    init: Some(Arc::new(|grid, _seed| spiral_initial(grid))),
                },
                params,
            }
        }
        "brusselator" => {
            let (a, b, du, dv) = (p("a"), p("b"), p("d_u"), p("d_v"));
            SystemSpec {
                name: name.into(),
                state_dim: 2,
                state_names: uv(),
                recommended_dt: 0.02,
                recommended_domain: Some(p("length")),
                default_z0: vec![],
                truth: terms(&[
                    &[("1", a), ("u", -(b + 1.0)), ("u^2*v", 1.0), ("Δu", du)],
                    &[("u", b), ("u^2*v", -1.0), ("Δv", dv)],
                ]),
                rhs: Rhs::Pde {
                    channels: uv(),
                    operators: OperatorSet { laplacian: true, ..Default::default() },
                    f: Arc::new(move |pt, out| {
                        let (u, v) = (pt.values[0], pt.values[1]);
                        let uuv = u * u * v;
                        out[0] = du * pt.laplacian[0] + a - (b + 1.0) * u + uuv;
                        out[1] = dv * pt.laplacian[1] + b * u - uuv;
                    }),
                    init: Some(Arc::new(move |grid, seed| {
                        vec![
                            Channel { name: "u".into(), data: smooth_noise(grid, seed, 3, 0.3, a) },
                            Channel { name: "v".into(), data: smooth_noise(grid, seed ^ 0x5555, 3, 0.3, b / a) },
                        ]
                    })),
                },
                params,
            }
        }
        "fitzhugh_nagumo" => {
            let (du, dv, eps, a0, a1) = (p("d_u"), p("d_v"), p("epsilon"), p("a0"), p("a1"));
            SystemSpec {
                name: name.into(),
                state_dim: 2,
                state_names: uv(),
                recommended_dt: 0.05,
                recommended_domain: Some(p("length")),
                default_z0: vec![],
                truth: terms(&[
                    &[("u", 1.0), ("v", -1.0), ("u^3", -1.0), ("Δu", du)],
                    &[("1", -eps * a0), ("u", eps), ("v", -eps * a1), ("Δv", dv)],
                ]),
                rhs: Rhs::Pde {
                    channels: uv(),
                    operators: OperatorSet { laplacian: true, ..Default::default() },
                    f: Arc::new(move |pt, out| {
                        let (u, v) = (pt.values[0], pt.values[1]);
                        out[0] = du * pt.laplacian[0] + u - u * u * u - v;
                        out[1] = dv * pt.laplacian[1] + eps * (u - a1 * v - a0);
                    }),
                    init: Some(Arc::new(|grid, seed| {
                        vec![
                            Channel { name: "u".into(), data: smooth_noise(grid, seed, 4, 0.8, 0.0) },
                            Channel { name: "v".into(), data: smooth_noise(grid, seed ^ 0xaaaa, 4, 0.3, 0.0) },
                        ]
                    })),
                },
                params,
            }
        }
        "swift_hohenberg" => {
            let r = p("r");
            SystemSpec {
                name: name.into(),
                state_dim: 1,
                state_names: vec!["u".into()],
                recommended_dt: 0.01,
                recommended_domain: Some(p("length")),
                default_z0: vec![],
                truth: terms(&[&[("u", r - 1.0), ("u^3", -1.0), ("Δu", -2.0), ("Δ²u", -1.0)]]),
                rhs: Rhs::Pde {
                    channels: vec!["u".into()],
                    operators: OperatorSet { laplacian: true, biharmonic: true, ..Default::default() },
                    f: Arc::new(move |pt, out| {
                        let u = pt.values[0];
                        // r·u − (1 + Δ)²u − u³
                        out[0] = (r - 1.0) * u - 2.0 * pt.laplacian[0] - pt.biharmonic[0] - u * u * u;
                    }),
                    init: Some(Arc::new(|grid, seed| {
                        vec![Channel { name: "u".into(), data: smooth_noise(grid, seed, 6, 0.5, 0.0) }]
                    })),
                },
                params,
            }
        }
        _ => unreachable!(),
    };
    Ok(spec)
}

/// Single-armed spiral: `u + iv = tanh(r)·exp(i(θ − r))` centred on the domain.
fn spiral_initial(grid: &Grid) -> Vec<Channel> {
    let (h, w) = (grid.height, grid.width);
    let mut u = vec![0.0; grid.cells()];
    let mut v = vec![0.0; grid.cells()];
    let (cx, cy) = (w as f64 * grid.dx / 2.0, h as f64 * grid.dy / 2.0);
    for i in 0..h {
        for j in 0..w {
            let x = j as f64 * grid.dx - cx;
            let y = i as f64 * grid.dy - cy;
            let r = x.hypot(y);
            let th = y.atan2(x);
            u[i * w + j] = (r * (th - r).cos()).tanh();
            v[i * w + j] = (r * (th - r).sin()).tanh();
        }
    }
    vec![Channel { name: "u".into(), data: u }, Channel { name: "v".into(), data: v }]
}

/// Periodic random field built from Fourier modes with integer wavenumbers
/// up to `kmax` (in units of the domain's fundamental), rescaled to
/// `amplitude` and shifted by `offset`.
fn smooth_noise(grid: &Grid, seed: u64, kmax: i32, amplitude: f64, offset: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (grid.height, grid.width);
    let mut u = vec![0.0; grid.cells()];
    for kx in -kmax..=kmax {
        for ky in 0..=kmax {
            if (kx == 0 && ky == 0) || kx * kx + ky * ky > kmax * kmax {
                continue;
            }
            let a: f64 = rng.random_range(-1.0..1.0);
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            for i in 0..h {
                for j in 0..w {
                    let arg = 2.0 * PI * (kx as f64 * j as f64 / w as f64 + ky as f64 * i as f64 / h as f64);
                    u[i * w + j] += a * (arg + phase).cos();
                }
            }
        }
    }
    let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    u.iter_mut().for_each(|v| *v = offset + amplitude * *v / peak);
    u
}
