use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::stencil::FeatureTensors;
use crate::error::{Error, Result};

/// Operator features at sampled pixels, laid out `frames × samples × features`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilFeatures {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub frames: usize,
    /// `(row, col)` of each sample, row-major order.
    pub coords: Vec<(usize, usize)>,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
}

impl StencilFeatures {
    pub fn samples(&self) -> usize {
        self.coords.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// One feature flattened over `(frame, sample)`.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let f = self.feature_index(name).ok_or_else(|| Error::UnknownFeature(name.into()))?;
        Ok(self.values.iter().skip(f).step_by(self.names.len()).copied().collect())
    }

    /// Regression data over interior frames `1..N-1`: states `(N-2)·P × C`
    /// (row-major), operator columns `(N-2)·P × K`, and the per-pixel central
    /// time derivative of each state channel.
    pub fn regression_data(&self, states: &[String], operators: &[String]) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
        let n = self.frames;
        if n < 3 {
            return Err(Error::pre("need at least 3 frames for time derivatives"));
        }
        let p = self.samples();
        let f = self.names.len();
        let find = |names: &[String]| -> Result<Vec<usize>> {
            names.iter().map(|s| self.feature_index(s).ok_or_else(|| Error::UnknownFeature(s.clone()))).collect()
        };
        let si = find(states)?;
        let oi = find(operators)?;
        let rows = (n - 2) * p;
        let mut z = Vec::with_capacity(rows * si.len());
        let mut custom = Vec::with_capacity(rows * oi.len());
        let mut dz = DMatrix::zeros(rows, si.len());
        let at = |k: usize, s: usize, c: usize| self.values[(k * p + s) * f + c];
        for k in 1..n - 1 {
            for s in 0..p {
                let r = (k - 1) * p + s;
                for (j, &c) in si.iter().enumerate() {
                    z.push(at(k, s, c));
                    dz[(r, j)] = (at(k + 1, s, c) - at(k - 1, s, c)) / (2.0 * self.dt);
                }
                custom.extend(oi.iter().map(|&c| at(k, s, c)));
            }
        }
        Ok((z, custom, dz))
    }
}

/// Uniform sampling without replacement of pixels at least `skip_boundary`
/// cells from the edge; coordinates sorted row-major.
pub fn sample_pixels(features: &FeatureTensors, n_samples: usize, seed: u64, skip_boundary: usize) -> Result<StencilFeatures> {
    let g = features.grid;
    if 2 * skip_boundary >= g.height || 2 * skip_boundary >= g.width {
        return Err(Error::pre(format!("skip_boundary {skip_boundary} leaves no pixels on a {}x{} grid", g.height, g.width)));
    }
    let rows = g.height - 2 * skip_boundary;
    let cols = g.width - 2 * skip_boundary;
    let available = rows * cols;
    if n_samples == 0 || n_samples > available {
        return Err(Error::pre(format!("n_samples must be in 1..={available}, got {n_samples}")));
    }
    let mut picks: Vec<usize> = if n_samples == available {
        (0..available).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, available, n_samples).into_vec()
    };
    picks.sort_unstable();
    let coords: Vec<(usize, usize)> = picks.iter().map(|&i| (i / cols + skip_boundary, i % cols + skip_boundary)).collect();
    let cells = g.cells();
    let columns: Vec<&[f64]> = features
        .names
        .iter()
        .map(|n| features.get(n).ok_or_else(|| Error::UnknownFeature(n.clone())))
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(features.frames * coords.len() * columns.len());
    for k in 0..features.frames {
        for &(i, j) in &coords {
            let idx = k * cells + i * g.width + j;
            values.extend(columns.iter().map(|c| c[idx]));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::pre("sampled features contain non-finite values"));
    }
    Ok(StencilFeatures {
        names: features.names.clone(),
        values,
        frames: features.frames,
        coords,
        dt: features.dt,
        dx: g.dx,
        dy: g.dy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Channel, FieldSeries, Grid};
    use crate::extract::apply_stencils;

    fn features() -> FeatureTensors {
        let grid = Grid::square(16, 16.0);
        let data: Vec<f64> = (0..3 * 256).map(|i| (i as f64 * 0.37).sin()).collect();
        let fs = FieldSeries::new(0.0, 0.1, grid, vec![Channel { name: "u".into(), data }]).unwrap();
        apply_stencils(&fs, &["u".into(), "Δu".into()]).unwrap()
    }

    #[test]
    fn full_sampling_is_row_major() {
        let f = features();
        let s = sample_pixels(&f, 256, 3, 0).unwrap();
        assert_eq!(s.coords[0], (0, 0));
        assert_eq!(s.coords[17], (1, 1));
        assert_eq!(s.column("u").unwrap(), f.get("u").unwrap());
    }

    #[test]
    fn seeded_and_bounded() {
        let f = features();
        let a = sample_pixels(&f, 40, 9, 2).unwrap();
        let b = sample_pixels(&f, 40, 9, 2).unwrap();
        let c = sample_pixels(&f, 40, 10, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.coords, c.coords);
        assert!(a.coords.iter().all(|&(i, j)| (2..14).contains(&i) && (2..14).contains(&j)));
        assert!(a.coords.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_pixels(&f, 145, 1, 2).is_err());
    }

    #[test]
    fn regression_layout() {
        let f = features();
        let s = sample_pixels(&f, 10, 1, 0).unwrap();
        let (z, custom, dz) = s.regression_data(&["u".into()], &["Δu".into()]).unwrap();
        assert_eq!((z.len(), custom.len(), dz.nrows()), (10, 10, 10));
        let u = f.get("u").unwrap();
        let (i, j) = s.coords[4];
        let idx = |k: usize| k * 256 + i * 16 + j;
        assert_eq!(z[4], u[idx(1)]);
        assert!((dz[(4, 0)] - (u[idx(2)] - u[idx(0)]) / 0.2).abs() < 1e-12);
    }
}
