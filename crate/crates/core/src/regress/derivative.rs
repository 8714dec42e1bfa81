use nalgebra::DMatrix;

use crate::dynamics::TrajectorySeries;
use crate::error::{Error, Result};

/// Interior-row derivative estimate. Row `r` corresponds to sample `r + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub values: DMatrix<f64>,
    pub offset: usize,
}

/// Second-order central differences `(z[k+1] - z[k-1]) / 2dt` on interior samples.
pub fn central_difference(z: &TrajectorySeries) -> Result<Derivative> {
    central_difference_raw(z.times(), z.dim(), z.states())
}

/// Same as [`central_difference`] on raw row-major data; checks time uniformity.
pub fn central_difference_raw(times: &[f64], dim: usize, states: &[f64]) -> Result<Derivative> {
    let n = times.len();
    if dim == 0 || states.len() != n * dim {
        return Err(Error::Shape(format!("{} values for {n} samples of dimension {dim}", states.len())));
    }
    if n < 3 {
        return Err(Error::pre(format!("central differences need at least 3 samples, got {n}")));
    }
    let dt = times[1] - times[0];
    if dt <= 0.0 {
        return Err(Error::NonUniformTime { index: 1 });
    }
    for k in 2..n {
        let step = times[k] - times[k - 1];
        if (step - dt).abs() > 1e-12 * dt.max(times[k].abs()).max(1.0) {
            return Err(Error::NonUniformTime { index: k });
        }
    }
    let mut values = DMatrix::zeros(n - 2, dim);
    for k in 1..n - 1 {
        for j in 0..dim {
            values[(k - 1, j)] = (states[(k + 1) * dim + j] - states[(k - 1) * dim + j]) / (2.0 * dt);
        }
    }
    Ok(Derivative { values, offset: 1 })
}

/// Interior rows `1..n-1` of a trajectory, matching a [`Derivative`].
pub fn interior_states(z: &TrajectorySeries) -> Vec<f64> {
    let d = z.dim();
    let n = z.len();
    if n < 3 {
        return Vec::new();
    }
    z.states()[d..(n - 1) * d].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> TrajectorySeries {
        let states = (0..n).map(|k| f(k as f64 * dt)).collect();
        TrajectorySeries::uniform(0.0, dt, 1, states).unwrap()
    }

    #[test]
    fn constant_gives_zero() {
        let d = central_difference(&series(0.1, 20, |_| 4.2)).unwrap();
        assert!(d.values.iter().all(|v| *v == 0.0));
        assert_eq!(d.values.nrows(), 18);
        assert_eq!(d.offset, 1);
    }

    #[test]
    fn exact_for_quadratics() {
        let z = series(0.1, 50, |t| t * t);
        let d = central_difference(&z).unwrap();
        for r in 0..d.values.nrows() {
            let t = z.times()[r + d.offset];
            assert!((d.values[(r, 0)] - 2.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_within_taylor_bound() {
        let dt = 0.01;
        let z = series(dt, 700, f64::sin);
        let d = central_difference(&z).unwrap();
        let worst = (0..d.values.nrows())
            .map(|r| (d.values[(r, 0)] - z.times()[r + 1].cos()).abs())
            .fold(0.0, f64::max);
        assert!(worst <= dt * dt / 6.0 + 1e-12, "{worst}");
    }

    #[test]
    fn rejects_nonuniform_and_short() {
        let err = central_difference_raw(&[0.0, 0.1, 0.25, 0.3], 1, &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::NonUniformTime { index: 2 }));
        assert!(central_difference_raw(&[0.0, 0.1], 1, &[0.0; 2]).is_err());
    }
}
