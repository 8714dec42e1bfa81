use nalgebra::{DMatrix, DVector};

use super::metrics::series_matrix;
use crate::dynamics::TrajectorySeries;
use crate::error::{Error, Result};

/// Similarity map `y = scale · x · rotation + translation` on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTransform {
    /// Orthogonal; determinant -1 when a reflection was needed.
    pub rotation: DMatrix<f64>,
    pub scale: f64,
    pub translation: DVector<f64>,
    /// RMSE between the aligned latent and the reference.
    pub residual: f64,
}

impl AlignmentTransform {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.rotation * self.scale;
        for mut row in y.row_iter_mut() {
            row += self.translation.transpose();
        }
        y
    }
}

fn centered(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()));
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

/// Optimal similarity alignment of `latent` onto `reference` (reflections allowed).
pub fn procrustes_align(latent: &TrajectorySeries, reference: &TrajectorySeries) -> Result<(AlignmentTransform, TrajectorySeries)> {
    if latent.len() != reference.len() || latent.dim() != reference.dim() {
        return Err(Error::Shape(format!(
            "latent {}x{} vs reference {}x{}",
            latent.len(),
            latent.dim(),
            reference.len(),
            reference.dim()
        )));
    }
    let x = series_matrix(latent);
    let y = series_matrix(reference);
    let (xc, xm) = centered(&x);
    let (yc, ym) = centered(&y);
    let (nx, ny) = (xc.norm_squared(), yc.norm_squared());
    if ny == 0.0 {
        return Err(Error::Degenerate("reference has zero variance".into()));
    }
    if nx == 0.0 {
        return Err(Error::Degenerate("latent has zero variance".into()));
    }
    let svd = (xc.transpose() * &yc).svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let rotation = u * vt;
    let scale = svd.singular_values.sum() / nx;
    let translation = ym - (xm.transpose() * &rotation * scale).transpose();
    let mut t = AlignmentTransform { rotation, scale, translation, residual: 0.0 };
    let aligned = t.apply(&x);
    t.residual = ((&aligned - &y).norm_squared() / y.len() as f64).sqrt();
    let states: Vec<f64> = aligned.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
    let series = TrajectorySeries::new(reference.times().to_vec(), reference.dim(), states)?;
    Ok((t, series))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spiral() -> TrajectorySeries {
        let states = (0..50).flat_map(|k| {
            let t = k as f64 * 0.2;
            [t.cos() * (1.0 + 0.1 * t), (1.3 * t).sin()]
        });
        TrajectorySeries::uniform(0.0, 0.2, 2, states.collect()).unwrap()
    }

    fn transformed(s: &TrajectorySeries, r: [[f64; 2]; 2], scale: f64, shift: [f64; 2]) -> TrajectorySeries {
        let states = s.rows().flat_map(|z| {
            let x = z[0] * r[0][0] + z[1] * r[1][0];
            let y = z[0] * r[0][1] + z[1] * r[1][1];
            [scale * x + shift[0], scale * y + shift[1]]
        });
        TrajectorySeries::uniform(0.0, 0.2, 2, states.collect()).unwrap()
    }

    #[test]
    fn identity_alignment() {
        let s = spiral();
        let (t, _) = procrustes_align(&s, &s).unwrap();
        assert!((t.rotation.clone() - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((t.scale - 1.0).abs() < 1e-12 && t.translation.amax() < 1e-12 && t.residual < 1e-12);
    }

    #[test]
    fn recovers_similarity_and_reflection() {
        let s = spiral();
        let target = transformed(&s, [[0.0, 1.0], [-1.0, 0.0]], 3.0, [1.0, -2.0]);
        let (t, aligned) = procrustes_align(&s, &target).unwrap();
        assert!(t.residual < 1e-10 && (t.scale - 3.0).abs() < 1e-10);
        assert!((aligned.states()[7] - target.states()[7]).abs() < 1e-10);
        let inv = procrustes_align(&target, &s).unwrap().0;
        assert!((inv.scale - 1.0 / 3.0).abs() < 1e-10);
        let mirrored = transformed(&s, [[1.0, 0.0], [0.0, -1.0]], 0.5, [0.0, 0.0]);
        let (t, _) = procrustes_align(&s, &mirrored).unwrap();
        assert!((t.rotation.determinant() + 1.0).abs() < 1e-10 && t.residual < 1e-10);
        let orth = t.rotation.transpose() * &t.rotation;
        assert!((orth - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn degenerate_reference() {
        let s = spiral();
        let flat = TrajectorySeries::uniform(0.0, 0.2, 2, vec![1.0; 100]).unwrap();
        assert!(matches!(procrustes_align(&s, &flat), Err(Error::Degenerate(_))));
    }
}
