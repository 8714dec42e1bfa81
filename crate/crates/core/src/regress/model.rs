use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::library::{CompiledLibrary, LibrarySpec};
use crate::dynamics::{FieldPoint, Grid, OdeFn, OperatorSet, PdeFn, Rhs, SystemSpec, TrueTerms};
use crate::error::{Error, Result};
use crate::extract::Operator;

/// Sparse coefficient matrix `Ξ` (`F × d`) with its feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    pub names: Vec<String>,
    /// `xi[f][j]`: coefficient of feature `f` in the equation of state `j`.
    pub xi: Vec<Vec<f64>>,
    pub lambda_sp: f64,
    pub library_spec: LibrarySpec,
    pub state_names: Vec<String>,
    pub state_dim: usize,
    /// Per state dimension: every column was thresholded away.
    #[serde(default)]
    pub empty_support: Vec<bool>,
    /// Spatial grid for field models (operator features need it to simulate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

impl SparseModel {
    pub fn zeros(layout: &CompiledLibrary, lambda_sp: f64) -> Self {
        let d = layout.state_dim();
        Self {
            names: layout.names.clone(),
            xi: vec![vec![0.0; d]; layout.len()],
            lambda_sp,
            library_spec: layout.spec.clone(),
            state_names: layout.state_names.clone(),
            state_dim: d,
            empty_support: vec![true; d],
            grid: None,
        }
    }

    /// Builds a model from named terms, e.g. a system's ground truth.
    pub fn from_terms(spec: &LibrarySpec, state_names: &[String], terms: &TrueTerms) -> Result<Self> {
        let layout = CompiledLibrary::new(spec, state_names)?;
        if terms.len() != layout.state_dim() {
            return Err(Error::Shape(format!("{} term lists for {} states", terms.len(), layout.state_dim())));
        }
        let mut model = Self::zeros(&layout, 0.0);
        for (j, list) in terms.iter().enumerate() {
            for (name, c) in list {
                let f = layout.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownFeature(name.clone()))?;
                model.xi[f][j] = *c;
            }
        }
        model.refresh_flags();
        Ok(model)
    }

    pub(crate) fn refresh_flags(&mut self) {
        self.empty_support = (0..self.state_dim).map(|j| self.xi.iter().all(|row| row[j] == 0.0)).collect();
    }

    pub fn feature_count(&self) -> usize {
        self.names.len()
    }

    /// Number of nonzero coefficients.
    pub fn complexity(&self) -> usize {
        self.xi.iter().flatten().filter(|c| **c != 0.0).count()
    }

    pub fn support(&self, j: usize) -> Vec<String> {
        self.names.iter().zip(&self.xi).filter(|(_, row)| row[j] != 0.0).map(|(n, _)| n.clone()).collect()
    }

    pub fn supports(&self) -> Vec<Vec<String>> {
        (0..self.state_dim).map(|j| self.support(j)).collect()
    }

    pub fn coefficient(&self, name: &str, j: usize) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|f| self.xi[f][j])
    }

    /// Nonzero terms per dimension as `(name, coefficient)`.
    pub fn terms(&self) -> TrueTerms {
        (0..self.state_dim)
            .map(|j| {
                self.names.iter().zip(&self.xi).filter(|(_, r)| r[j] != 0.0).map(|(n, r)| (n.clone(), r[j])).collect()
            })
            .collect()
    }

    /// Re-resolves the library layout and checks it matches the stored names.
    pub fn layout(&self) -> Result<CompiledLibrary> {
        let layout = CompiledLibrary::new(&self.library_spec, &self.state_names)?;
        if layout.names != self.names {
            return Err(Error::Shape("model feature names do not match its library spec".into()));
        }
        if self.xi.len() != self.names.len() || self.xi.iter().any(|r| r.len() != self.state_dim) {
            return Err(Error::Shape("coefficient matrix does not match feature/state counts".into()));
        }
        Ok(layout)
    }

    /// Equation strings such as `dz1/dt = -0.1*z1 + 2*z2`.
    pub fn to_symbolic(&self, precision: usize) -> Vec<String> {
        to_symbolic(self, precision)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.layout()?;
        Ok(model)
    }
}

/// Rounds to `digits` significant digits and prints the shortest form.
pub fn format_sig(value: f64, digits: usize) -> String {
    let digits = digits.max(1);
    let rounded: f64 = format!("{:.*e}", digits - 1, value).parse().unwrap_or(value);
    let s = format!("{rounded}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn to_symbolic(model: &SparseModel, precision: usize) -> Vec<String> {
    (0..model.state_dim)
        .map(|j| {
            let mut rhs = String::new();
            for (name, row) in model.names.iter().zip(&model.xi) {
                let c = row[j];
                if c == 0.0 {
                    continue;
                }
                let mag = format_sig(c.abs(), precision);
                let term = if name == "1" { mag } else { format!("{mag}*{name}") };
                if rhs.is_empty() {
                    if c < 0.0 {
                        rhs.push('-');
                    }
                    rhs.push_str(&term);
                } else {
                    rhs.push_str(if c < 0.0 { " - " } else { " + " });
                    rhs.push_str(&term);
                }
            }
            if rhs.is_empty() {
                rhs.push('0');
            }
            format!("d{}/dt = {rhs}", model.state_names[j])
        })
        .collect()
}

/// `Θ(z)·Ξ` at one state. Non-finite features surface as `FeatureOverflow`.
pub fn evaluate_rhs(model: &SparseModel, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != model.state_dim {
        return Err(Error::Shape(format!("state has {} entries, model expects {}", z.len(), model.state_dim)));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::pre("state contains non-finite values"));
    }
    let layout = model.layout()?;
    if layout.custom_count() > 0 {
        return Err(Error::pre("field models need operator inputs; use pde_system"));
    }
    let mut row = vec![0.0; layout.len()];
    layout.eval_row(z, &[], &mut row);
    if let Some(f) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::FeatureOverflow { feature: layout.names[f].clone(), row: 0 });
    }
    let mut out = vec![0.0; model.state_dim];
    for (theta, coeffs) in row.iter().zip(&model.xi) {
        for (o, c) in out.iter_mut().zip(coeffs) {
            if *c != 0.0 {
                *o += c * theta;
            }
        }
    }
    Ok(out)
}

/// Sparse row form of `Ξ` for fast repeated evaluation.
fn active_terms(model: &SparseModel) -> Vec<(usize, usize, f64)> {
    let mut act = Vec::new();
    for (f, row) in model.xi.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if *c != 0.0 {
                act.push((f, j, *c));
            }
        }
    }
    act
}

/// Wraps an ODE model as a [`SystemSpec`] so the ground-truth integrator can simulate it.
pub fn ode_system(model: &SparseModel, dt: f64) -> Result<SystemSpec> {
    let layout = model.layout()?;
    if layout.custom_count() > 0 {
        return Err(Error::pre("model has operator features; use pde_system"));
    }
    let act = active_terms(model);
    let f = layout.len();
    let rhs: OdeFn = Arc::new(move |z: &[f64], out: &mut [f64]| {
        let mut row = vec![0.0; f];
        layout.eval_row(z, &[], &mut row);
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(fi, j, c) in &act {
            out[j] += c * row[fi];
        }
    });
    Ok(SystemSpec {
        name: "discovered".into(),
        state_dim: model.state_dim,
        state_names: model.state_names.clone(),
        params: BTreeMap::new(),
        recommended_dt: dt,
        recommended_domain: None,
        default_z0: vec![0.0; model.state_dim],
        truth: model.terms(),
        rhs: Rhs::Ode(rhs),
    })
}

/// Wraps a field model (operator features over channels) as a PDE [`SystemSpec`].
pub fn pde_system(model: &SparseModel, grid: Grid) -> Result<SystemSpec> {
    let layout = model.layout()?;
    let channels = model.state_names.clone();
    let mut ops = Vec::new();
    let mut operators = OperatorSet::default();
    for name in &layout.spec.custom {
        let (op, idx) = Operator::parse(name, &channels).ok_or_else(|| Error::UnknownFeature(name.clone()))?;
        match op {
            Operator::Dx | Operator::Dy => operators.gradient = true,
            Operator::Laplacian => operators.laplacian = true,
            Operator::Biharmonic => operators.biharmonic = true,
            Operator::Identity => {}
            Operator::Dxx | Operator::Dyy => {
                return Err(Error::pre(format!("operator feature `{name}` cannot be simulated")));
            }
        }
        ops.push((op, idx));
    }
    let act = active_terms(model);
    let f = layout.len();
    let c = ops.len();
    let rhs: PdeFn = Arc::new(move |p: &FieldPoint<'_>, out: &mut [f64]| {
        let mut custom = [0.0f64; 16];
        let mut custom_vec;
        let cv: &mut [f64] = if c <= 16 {
            &mut custom[..c]
        } else {
            custom_vec = vec![0.0; c];
            &mut custom_vec
        };
        for (slot, (op, idx)) in cv.iter_mut().zip(&ops) {
            *slot = match op {
                Operator::Identity => p.values[*idx],
                Operator::Dx => p.grad_x[*idx],
                Operator::Dy => p.grad_y[*idx],
                Operator::Laplacian => p.laplacian[*idx],
                Operator::Biharmonic => p.biharmonic[*idx],
                Operator::Dxx | Operator::Dyy => 0.0,
            };
        }
        let mut row = [0.0f64; 64];
        let mut row_vec;
        let r: &mut [f64] = if f <= 64 {
            &mut row[..f]
        } else {
            row_vec = vec![0.0; f];
            &mut row_vec
        };
        layout.eval_row(p.values, cv, r);
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(fi, j, coef) in &act {
            out[j] += coef * r[fi];
        }
    });
    Ok(SystemSpec {
        name: "discovered".into(),
        state_dim: model.state_dim,
        state_names: channels.clone(),
        params: BTreeMap::new(),
        recommended_dt: 0.0,
        recommended_domain: Some(grid.dx * grid.width as f64),
        default_z0: vec![],
        truth: model.terms(),
        rhs: Rhs::Pde { channels, operators, f: rhs, init: None },
    })
}
