use nalgebra::DMatrix;

use crate::dynamics::{integrate_ode, integrate_pde, FieldSeries, FieldSnapshot, Grid, TrajectorySeries};
use crate::error::{Error, Result};
use crate::extract::stencil::{d_dx, d_dy};
use crate::regress::{ode_system, pde_system, SparseModel};

/// Pooled coefficient of determination `1 - SS_res / SS_tot`, with `SS_tot`
/// taken about each column's mean. Zero total variance yields 1 for an exact
/// fit and `-inf` otherwise.
pub fn r2_score(num: &DMatrix<f64>, model: &DMatrix<f64>) -> Result<f64> {
    if num.shape() != model.shape() {
        return Err(Error::Shape(format!("r2 operands {:?} vs {:?}", num.shape(), model.shape())));
    }
    if num.nrows() < 2 {
        return Err(Error::pre("r2 needs at least 2 rows"));
    }
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for j in 0..num.ncols() {
        let col = num.column(j);
        let mean = col.mean();
        ss_tot += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        ss_res += col.iter().zip(model.column(j).iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    })
}

pub fn series_matrix(s: &TrajectorySeries) -> DMatrix<f64> {
    DMatrix::from_row_slice(s.len(), s.dim(), s.states())
}

/// `R²` of a prediction against a reference over the reference's length.
/// Samples missing after a divergence repeat the last valid state.
pub fn r2_trajectory(pred: &TrajectorySeries, truth: &TrajectorySeries) -> Result<f64> {
    let (p, t) = padded(pred, truth)?;
    r2_score(&t, &p)
}

fn padded(pred: &TrajectorySeries, truth: &TrajectorySeries) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!("dimension {} vs {}", pred.dim(), truth.dim())));
    }
    if pred.len() > truth.len() || (pred.len() < truth.len() && pred.divergence().is_none()) {
        return Err(Error::Shape(format!("prediction has {} samples, reference {}", pred.len(), truth.len())));
    }
    let d = truth.dim();
    let last = pred.row(pred.len() - 1).to_vec();
    let p = DMatrix::from_fn(truth.len(), d, |r, c| if r < pred.len() { pred.row(r)[c] } else { last[c] });
    Ok((p, series_matrix(truth)))
}

/// Nonzero coefficient count of `Ξ`.
pub fn complexity(model: &SparseModel) -> usize {
    model.complexity()
}

/// Simulates a discovered ODE law with the ground-truth integrator.
pub fn extrapolate(model: &SparseModel, z0: &[f64], dt: f64, horizon: usize) -> Result<TrajectorySeries> {
    let sys = ode_system(model, dt)?;
    integrate_ode(&sys, z0, dt, horizon)
}

/// Simulates a discovered field law from an initial snapshot.
pub fn extrapolate_field(model: &SparseModel, initial: &FieldSnapshot, dt: f64, horizon: usize) -> Result<FieldSeries> {
    let sys = pde_system(model, initial.grid)?;
    integrate_pde(&sys, initial, dt, horizon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseResult {
    pub value: f64,
    /// Samples compared (the valid prefix when the prediction diverged).
    pub samples: usize,
    pub diverged: bool,
}

fn check_shapes(pred_len: usize, truth_len: usize, pred_div: bool) -> Result<usize> {
    if pred_len == truth_len || (pred_len < truth_len && pred_div) {
        Ok(pred_len)
    } else {
        Err(Error::Shape(format!("prediction has {pred_len} samples, reference {truth_len}")))
    }
}

/// Root mean square over all entries of the common (valid) prefix.
pub fn rmse(pred: &TrajectorySeries, truth: &TrajectorySeries) -> Result<RmseResult> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!("dimension {} vs {}", pred.dim(), truth.dim())));
    }
    let (a, b) = if truth.divergence().is_some() && pred.divergence().is_none() { (truth, pred) } else { (pred, truth) };
    let n = check_shapes(a.len(), b.len(), a.divergence().is_some())?;
    let m = n * a.dim();
    let sum: f64 = a.states()[..m].iter().zip(&b.states()[..m]).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(RmseResult { value: (sum / m as f64).sqrt(), samples: n, diverged: a.divergence().is_some() })
}

fn field_pairs<'a>(pred: &'a FieldSeries, truth: &'a FieldSeries) -> Result<Vec<(&'a [f64], &'a [f64])>> {
    if pred.grid.height != truth.grid.height || pred.grid.width != truth.grid.width {
        return Err(Error::Shape("field grids differ".into()));
    }
    let n = check_shapes(pred.len(), truth.len(), pred.divergence.is_some())?;
    let cells = truth.grid.cells();
    truth
        .channels
        .iter()
        .map(|tc| {
            let pc = pred
                .channels
                .iter()
                .find(|c| c.name == tc.name)
                .ok_or_else(|| Error::Shape(format!("prediction lacks channel `{}`", tc.name)))?;
            Ok((&pc.data[..n * cells], &tc.data[..n * cells]))
        })
        .collect()
}

pub fn rmse_fields(pred: &FieldSeries, truth: &FieldSeries) -> Result<RmseResult> {
    let pairs = field_pairs(pred, truth)?;
    let (mut sum, mut m) = (0.0, 0usize);
    for (p, t) in &pairs {
        sum += p.iter().zip(t.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        m += p.len();
    }
    let samples = pairs.first().map(|(p, _)| p.len() / truth.grid.cells()).unwrap_or(0);
    Ok(RmseResult { value: (sum / m.max(1) as f64).sqrt(), samples, diverged: pred.divergence.is_some() })
}

fn global_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, s) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = s / n.max(1) as f64;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
}

/// Counts leading steps `1..` whose per-step RMSE, divided by the truth's
/// global standard deviation, stays below `eps`. Step 0 (the shared initial
/// state) is not counted, so a perfect prediction scores `truth.len() - 1`.
pub fn vps(pred: &TrajectorySeries, truth: &TrajectorySeries, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::pre("vps threshold must be > 0"));
    }
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!("dimension {} vs {}", pred.dim(), truth.dim())));
    }
    check_shapes(pred.len(), truth.len(), pred.divergence().is_some())?;
    let std = global_std(truth.states().iter().copied());
    let d = truth.dim();
    let mut count = 0;
    for k in 1..pred.len() {
        let e = (pred.row(k).iter().zip(truth.row(k)).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d as f64).sqrt();
        if !(e / std < eps) && !(e == 0.0) {
            break;
        }
        count += 1;
    }
    Ok(count)
}

pub fn vps_fields(pred: &FieldSeries, truth: &FieldSeries, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::pre("vps threshold must be > 0"));
    }
    let pairs = field_pairs(pred, truth)?;
    let cells = truth.grid.cells();
    let n = pairs.first().map(|(p, _)| p.len() / cells).unwrap_or(0);
    let std = global_std(truth.channels.iter().flat_map(|c| c.data.iter().copied()));
    let mut count = 0;
    for k in 1..n {
        let mut sum = 0.0;
        for (p, t) in &pairs {
            sum += p[k * cells..(k + 1) * cells].iter().zip(&t[k * cells..(k + 1) * cells]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let e = (sum / (cells * pairs.len()) as f64).sqrt();
        if !(e / std < eps) && !(e == 0.0) {
            break;
        }
        count += 1;
    }
    Ok(count)
}

/// Vorticity `∂v/∂x - ∂u/∂y` per frame, using the extraction stencils.
pub fn vorticity(fields: &FieldSeries) -> Result<Vec<f64>> {
    let u = fields.channel_index("u").ok_or_else(|| Error::pre("field lacks channel `u`"))?;
    let v = fields.channel_index("v").ok_or_else(|| Error::pre("field lacks channel `v`"))?;
    let cells = fields.grid.cells();
    let mut out = vec![0.0; fields.len() * cells];
    let (mut vx, mut uy) = (vec![0.0; cells], vec![0.0; cells]);
    for k in 0..fields.len() {
        d_dx(fields.frame(v, k), &fields.grid, &mut vx);
        d_dy(fields.frame(u, k), &fields.grid, &mut uy);
        for (o, (a, b)) in out[k * cells..(k + 1) * cells].iter_mut().zip(vx.iter().zip(&uy)) {
            *o = a - b;
        }
    }
    Ok(out)
}

/// RMSE between predicted and true vorticity fields.
pub fn curl_error(pred: &FieldSeries, truth: &FieldSeries) -> Result<f64> {
    if pred.grid != truth.grid || pred.len() != truth.len() {
        return Err(Error::Shape("curl_error needs equal grids and lengths".into()));
    }
    let (a, b) = (vorticity(pred)?, vorticity(truth)?);
    Ok((a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt())
}

/// RMSE of vorticity against an analytic field, ignoring `margin` boundary cells.
pub fn curl_error_interior(fields: &FieldSeries, analytic: &[f64], grid: &Grid, margin: usize) -> Result<f64> {
    let w = vorticity(fields)?;
    if analytic.len() != w.len() {
        return Err(Error::Shape("analytic vorticity has the wrong length".into()));
    }
    let cells = grid.cells();
    let (mut sum, mut n) = (0.0, 0usize);
    for (idx, (a, b)) in w.iter().zip(analytic).enumerate() {
        let c = idx % cells;
        let (i, j) = (c / grid.width, c % grid.width);
        if i >= margin && j >= margin && i + margin < grid.height && j + margin < grid.width {
            sum += (a - b).powi(2);
            n += 1;
        }
    }
    Ok((sum / n.max(1) as f64).sqrt())
}

/// Ratio of second-difference to first-difference norm; large values mean
/// a jagged trajectory.
pub fn smoothness(traj: &TrajectorySeries) -> f64 {
    let d = traj.dim();
    let s = traj.states();
    let n = traj.len();
    let first: f64 = (1..n).map(|k| (0..d).map(|j| (s[k * d + j] - s[(k - 1) * d + j]).powi(2)).sum::<f64>()).sum();
    let second: f64 = (1..n.saturating_sub(1))
        .map(|k| (0..d).map(|j| (s[(k + 1) * d + j] - 2.0 * s[k * d + j] + s[(k - 1) * d + j]).powi(2)).sum::<f64>())
        .sum();
    if first == 0.0 {
        0.0
    } else {
        (second / first).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{builtin_system, Channel};
    use crate::regress::{CompiledLibrary, LibrarySpec};

    fn traj(v: Vec<f64>, d: usize) -> TrajectorySeries {
        TrajectorySeries::uniform(0.0, 0.1, d, v).unwrap()
    }

    #[test]
    fn r2_cases() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 1.0, 3.0, 5.0, 4.0, 0.0]);
        assert_eq!(r2_score(&a, &a).unwrap(), 1.0);
        let means = DMatrix::from_fn(4, 2, |_, c| a.column(c).mean());
        assert!(r2_score(&a, &means).unwrap().abs() < 1e-15);
        let b = DMatrix::from_row_slice(4, 2, &[1.5, 2.0, 2.0, 0.0, 2.0, 5.0, 4.0, 1.0]);
        // SS_res = 0.25 + 1 + 1 + 1 = 3.25; SS_tot = 5 + 14 = 19.
        assert!((r2_score(&a, &b).unwrap() - (1.0 - 3.25 / 19.0)).abs() < 1e-15);
        let c = DMatrix::from_element(3, 1, 2.0);
        assert_eq!(r2_score(&c, &c).unwrap(), 1.0);
        assert_eq!(r2_score(&c, &(c.clone() * 2.0)).unwrap(), f64::NEG_INFINITY);
        assert!(r2_score(&a, &c).is_err());
    }

    #[test]
    fn rmse_and_vps_basics() {
        let t = traj((0..20).map(|k| (k as f64 * 0.3).sin()).collect(), 2);
        assert_eq!(rmse(&t, &t).unwrap().value, 0.0);
        let shifted = traj(t.states().iter().map(|v| v + 0.25).collect(), 2);
        assert!((rmse(&shifted, &t).unwrap().value - 0.25).abs() < 1e-12);
        assert_eq!(vps(&t, &t, 0.5).unwrap(), 9);
        let far = traj(t.states().iter().map(|v| v + 10.0).collect(), 2);
        assert_eq!(vps(&far, &t, 0.5).unwrap(), 0);
        assert_eq!(vps(&far, &t, f64::INFINITY).unwrap(), 9);
    }

    #[test]
    fn extrapolation_of_exact_models() {
        let spec = LibrarySpec { poly_degree: 2, ..Default::default() };
        let names = vec!["z1".to_string(), "z2".to_string()];
        let zero = SparseModel::zeros(&CompiledLibrary::new(&spec, &names).unwrap(), 0.1);
        let still = extrapolate(&zero, &[0.3, -0.2], 0.01, 50).unwrap();
        assert!(still.rows().all(|r| r == [0.3, -0.2]));
        let sys = builtin_system("circular").unwrap();
        let circ = SparseModel::from_terms(&spec, &names, &sys.truth).unwrap();
        let orbit = extrapolate(&circ, &[1.0, 0.0], 0.01, 1000).unwrap();
        assert!(orbit.rows().all(|r| (r[0].hypot(r[1]) - 1.0).abs() < 1e-8));
    }

    #[test]
    fn divergent_prediction_scored_on_prefix() {
        let spec = LibrarySpec { poly_degree: 3, ..Default::default() };
        let names = vec!["z1".to_string()];
        let blow = SparseModel::from_terms(&spec, &names, &vec![vec![("z1^3".into(), 1.0)]]).unwrap();
        let pred = extrapolate(&blow, &[1.0], 0.01, 200).unwrap();
        assert!(pred.divergence().is_some());
        let truth = traj(vec![1.0; 201], 1);
        let r = rmse(&pred, &truth).unwrap();
        assert!(r.diverged && r.samples == pred.len() && r.value.is_finite());
        assert!(vps(&pred, &truth, 0.5).unwrap() < 200);
        assert!(r2_trajectory(&pred, &truth).unwrap() < 0.5);
    }

    #[test]
    fn rigid_rotation_vorticity() {
        let grid = Grid::square(16, 16.0);
        let (mut u, mut v) = (vec![0.0; 256], vec![0.0; 256]);
        for i in 0..16 {
            for j in 0..16 {
                u[i * 16 + j] = -(i as f64);
                v[i * 16 + j] = j as f64;
            }
        }
        let fs = FieldSeries::new(0.0, 0.1, grid, vec![Channel { name: "u".into(), data: u }, Channel { name: "v".into(), data: v }])
            .unwrap();
        assert!(curl_error_interior(&fs, &vec![2.0; 256], &grid, 1).unwrap() < 1e-10);
        assert_eq!(curl_error(&fs, &fs).unwrap(), 0.0);
    }
}
