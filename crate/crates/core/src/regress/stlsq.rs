use nalgebra::{DMatrix, DVector};

use super::library::CandidateLibrary;
use super::model::SparseModel;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 10;
const RIDGE: f64 = 1e-12;
/// Cholesky pivots below this (on unit-norm columns) mark a dependent column.
const PIVOT_TOL: f64 = 1e-10;

/// Raw STLSQ result on bare matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct StlsqFit {
    /// `F × d` coefficients in original column units.
    pub xi: DMatrix<f64>,
    pub empty_support: Vec<bool>,
    /// Iterations used per output dimension.
    pub iterations: Vec<usize>,
    /// Columns dropped as linearly dependent, per output dimension.
    pub dropped: Vec<Vec<usize>>,
}

/// Cholesky solve of `G[a, a] x = b[a]`, removing columns whose pivot vanishes.
fn solve_active(gram: &DMatrix<f64>, rhs: &DVector<f64>, active: &mut Vec<usize>, dropped: &mut Vec<usize>) -> Vec<f64> {
    'outer: loop {
        let n = active.len();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = gram[(active[i], active[j])];
                if i == j {
                    s += RIDGE;
                }
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if s <= PIVOT_TOL * (1.0 + gram[(active[i], active[i])]) {
                        let col = active.remove(i);
                        log::warn!("rank-deficient active set: dropping dependent column {col}");
                        dropped.push(col);
                        continue 'outer;
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = rhs[active[i]];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        return x;
    }
}

/// Sequentially thresholded least squares on a bare `M × F` matrix.
pub fn stlsq_matrix(theta: &DMatrix<f64>, dz: &DMatrix<f64>, lambda_sp: f64, max_iter: usize) -> Result<StlsqFit> {
    let (m, f) = theta.shape();
    if dz.nrows() != m {
        return Err(Error::Shape(format!("library has {m} rows, derivative has {}", dz.nrows())));
    }
    if !(lambda_sp >= 0.0) || !lambda_sp.is_finite() {
        return Err(Error::pre(format!("lambda_sp must be finite and >= 0, got {lambda_sp}")));
    }
    if max_iter == 0 {
        return Err(Error::pre("max_iter must be >= 1"));
    }
    if theta.iter().chain(dz.iter()).any(|v| !v.is_finite()) {
        return Err(Error::pre("library or derivative contains non-finite values"));
    }
    if m < f {
        log::warn!("underdetermined regression: {m} rows for {f} features");
    }
    let norms: Vec<f64> = (0..f).map(|c| theta.column(c).norm()).collect();
    let mut scaled = theta.clone();
    for (c, n) in norms.iter().enumerate() {
        if *n > 0.0 {
            scaled.column_mut(c).scale_mut(1.0 / n);
        }
    }
    // Pairwise dot products so any column subset sees bit-identical entries.
    let mut gram = DMatrix::zeros(f, f);
    for a in 0..f {
        for b in 0..=a {
            let v = scaled.column(a).dot(&scaled.column(b));
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let d = dz.ncols();
    let mut xi = DMatrix::zeros(f, d);
    let mut empty = vec![false; d];
    let mut iterations = vec![0; d];
    let mut dropped_all = vec![Vec::new(); d];
    for j in 0..d {
        let rhs = DVector::from_iterator(f, (0..f).map(|c| scaled.column(c).dot(&dz.column(j))));
        let mut active: Vec<usize> = (0..f).filter(|&c| norms[c] > 0.0).collect();
        let mut coef = vec![0.0; f];
        let mut dropped = Vec::new();
        let mut converged = false;
        for it in 0..max_iter {
            iterations[j] = it + 1;
            coef.iter_mut().for_each(|c| *c = 0.0);
            if active.is_empty() {
                converged = true;
                break;
            }
            let x = solve_active(&gram, &rhs, &mut active, &mut dropped);
            for (k, &c) in active.iter().enumerate() {
                coef[c] = x[k] / norms[c];
            }
            let kept: Vec<usize> = active.iter().copied().filter(|&c| coef[c].abs() >= lambda_sp).collect();
            if kept == active {
                converged = true;
                break;
            }
            active = kept;
        }
        if !converged {
            // Out of iterations: refit on the last thresholded support.
            coef.iter_mut().for_each(|c| *c = 0.0);
            if !active.is_empty() {
                let x = solve_active(&gram, &rhs, &mut active, &mut dropped);
                for (k, &c) in active.iter().enumerate() {
                    coef[c] = x[k] / norms[c];
                }
            }
        }
        for (c, v) in coef.iter().enumerate() {
            xi[(c, j)] = if v.abs() >= lambda_sp { *v } else { 0.0 };
        }
        empty[j] = (0..f).all(|c| xi[(c, j)] == 0.0);
        dropped_all[j] = dropped;
    }
    Ok(StlsqFit { xi, empty_support: empty, iterations, dropped: dropped_all })
}

/// STLSQ on an evaluated library; returns a model in original units.
pub fn stlsq(theta: &CandidateLibrary, dz: &DMatrix<f64>, lambda_sp: f64, max_iter: usize) -> Result<SparseModel> {
    if dz.ncols() != theta.layout.state_dim() {
        return Err(Error::Shape(format!(
            "derivative has {} columns, library state dimension is {}",
            dz.ncols(),
            theta.layout.state_dim()
        )));
    }
    let fit = stlsq_matrix(&theta.matrix, dz, lambda_sp, max_iter)?;
    let mut model = SparseModel::zeros(&theta.layout, lambda_sp);
    for (f, row) in model.xi.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = fit.xi[(f, j)];
        }
    }
    model.refresh_flags();
    Ok(model)
}

/// Best subset for one output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFit {
    /// Selected column indices, ascending (the intercept is not counted).
    pub support: Vec<usize>,
    /// Coefficients for every column; zero off the support.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Mean squared residual.
    pub mse: f64,
}

pub const ORACLE_MAX_FEATURES: usize = 12;
pub const ORACLE_MAX_K: usize = 4;

fn subsets(pool: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..pool.len() {
        cur.push(pool[i]);
        subsets(pool, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Exhaustive best-subset least squares with an always-on intercept.
///
/// Residuals within `rel_tie · var(dZ_j)` of the best count as ties; ties go
/// to the smaller support, then the lexicographically first one. A column
/// named `1` is treated as the intercept and never enumerated.
pub fn support_oracle_matrix(
    theta: &DMatrix<f64>,
    names: &[String],
    dz: &DMatrix<f64>,
    k_max: usize,
    rel_tie: f64,
) -> Result<Vec<OracleFit>> {
    let (m, f) = theta.shape();
    if f > ORACLE_MAX_FEATURES {
        return Err(Error::TooManyFeatures(f));
    }
    if k_max > ORACLE_MAX_K {
        return Err(Error::pre(format!("k_max must be <= {ORACLE_MAX_K}, got {k_max}")));
    }
    if dz.nrows() != m || names.len() != f {
        return Err(Error::Shape("oracle inputs disagree on row or feature counts".into()));
    }
    let pool: Vec<usize> = (0..f).filter(|&c| names[c] != "1").collect();
    let mut candidates = Vec::new();
    for k in 0..=k_max.min(pool.len()) {
        subsets(&pool, k, 0, &mut Vec::new(), &mut candidates);
    }
    let mut fits = Vec::with_capacity(dz.ncols());
    for j in 0..dz.ncols() {
        let y = dz.column(j).into_owned();
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        let tie = rel_tie * var + 1e-12;
        let scored: Vec<(f64, DVector<f64>)> = candidates
            .iter()
            .map(|s| {
                let mut x = DMatrix::from_element(m, s.len() + 1, 1.0);
                for (k, &c) in s.iter().enumerate() {
                    x.set_column(k + 1, &theta.column(c));
                }
                let beta = x.clone().svd(true, true).solve(&y, 1e-12).unwrap_or_else(|_| DVector::zeros(s.len() + 1));
                let mse = (&y - &x * &beta).norm_squared() / m as f64;
                (mse, beta)
            })
            .collect();
        let best = scored.iter().map(|(e, _)| *e).fold(f64::INFINITY, f64::min);
        // Candidates are already in (size, lexicographic) order.
        let idx = scored.iter().position(|(e, _)| *e <= best + tie).unwrap_or(0);
        let (mse, beta) = &scored[idx];
        let support = candidates[idx].clone();
        let mut coefficients = vec![0.0; f];
        for (k, &c) in support.iter().enumerate() {
            coefficients[c] = beta[k + 1];
        }
        fits.push(OracleFit { support, coefficients, intercept: beta[0], mse: *mse });
    }
    Ok(fits)
}

pub fn support_oracle(theta: &CandidateLibrary, dz: &DMatrix<f64>, k_max: usize) -> Result<Vec<OracleFit>> {
    support_oracle_matrix(&theta.matrix, theta.names(), dz, k_max, 1e-4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{builtin_system, integrate_ode};
    use crate::regress::{build_library, central_difference, interior_states, LibrarySpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(m: usize, f: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, f, |_, _| StandardNormal.sample(&mut rng))
    }

    fn zn() -> Vec<String> {
        vec!["z1".into(), "z2".into()]
    }

    #[test]
    fn exact_single_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let lib = build_library(&z, &zn(), &LibrarySpec { poly_degree: 2, ..Default::default() }, None).unwrap();
        let dz = DMatrix::from_fn(100, 1, |r, _| 2.0 * z[2 * r]);
        let lib1 = CandidateLibrary { layout: lib.layout.clone(), matrix: lib.matrix.clone() };
        let fit = stlsq_matrix(&lib1.matrix, &dz, 0.1, 10).unwrap();
        let nz: Vec<usize> = (0..6).filter(|&c| fit.xi[(c, 0)] != 0.0).collect();
        assert_eq!(nz, [1]);
        assert!((fit.xi[(1, 0)] - 2.0).abs() < 1e-10);
        let oracle = support_oracle_matrix(&lib1.matrix, lib1.names(), &dz, 3, 1e-4).unwrap();
        assert_eq!(oracle[0].support, nz);
    }

    #[test]
    fn zero_threshold_is_least_squares() {
        let theta = gaussian(80, 6, 2);
        let dz = gaussian(80, 2, 3);
        let fit = stlsq_matrix(&theta, &dz, 0.0, 10).unwrap();
        let ls = theta.clone().svd(true, true).solve(&dz, 1e-14).unwrap();
        assert!((fit.xi - ls).amax() < 1e-10);
    }

    #[test]
    fn threshold_invariant_and_idempotent() {
        let theta = gaussian(120, 8, 4);
        let mut xi = DMatrix::zeros(8, 2);
        xi[(1, 0)] = 1.5;
        xi[(4, 0)] = -0.7;
        xi[(2, 1)] = 0.3;
        let noise = gaussian(120, 2, 5) * 0.05;
        let dz = &theta * &xi + noise;
        let lambda = 0.2;
        let fit = stlsq_matrix(&theta, &dz, lambda, 10).unwrap();
        assert!(fit.xi.iter().all(|v| *v == 0.0 || v.abs() >= lambda));
        for j in 0..2 {
            let active: Vec<usize> = (0..8).filter(|&c| fit.xi[(c, j)] != 0.0).collect();
            let sub = theta.select_columns(&active);
            let again = stlsq_matrix(&sub, &dz.columns(j, 1).into_owned(), lambda, 10).unwrap();
            for (k, &c) in active.iter().enumerate() {
                assert_eq!(again.xi[(k, 0)], fit.xi[(c, j)]);
            }
        }
    }

    #[test]
    fn empty_support_and_dependent_columns() {
        let theta = gaussian(50, 3, 6);
        let dz = DMatrix::from_element(50, 1, 1e-6);
        let fit = stlsq_matrix(&theta, &dz, 0.5, 10).unwrap();
        assert!(fit.empty_support[0]);
        let mut dup = DMatrix::zeros(50, 3);
        dup.set_column(0, &theta.column(0));
        dup.set_column(1, &(theta.column(0) * 2.0));
        dup.set_column(2, &theta.column(1));
        let target = theta.column(0) * 3.0 + theta.column(1);
        let fit = stlsq_matrix(&dup, &DMatrix::from_columns(&[target]), 0.1, 10).unwrap();
        assert_eq!(fit.dropped[0], [1]);
        assert!((fit.xi[(0, 0)] - 3.0).abs() < 1e-8 && (fit.xi[(2, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn linear_system_recovered() {
        let sys = builtin_system("linear").unwrap();
        let traj = integrate_ode(&sys, &[2.0, 0.0], 0.01, 2500).unwrap();
        let d = central_difference(&traj).unwrap();
        let lib = build_library(&interior_states(&traj), &sys.state_names, &LibrarySpec::default(), None).unwrap();
        let model = stlsq(&lib, &d.values, 0.05, 10).unwrap();
        assert_eq!(model.supports(), [vec!["z1", "z2"], vec!["z1", "z2"]]);
        let want = [[-0.1, 2.0], [-2.0, -0.1]];
        for j in 0..2 {
            assert!((model.coefficient("z1", j).unwrap() - want[j][0]).abs() < 1e-2);
            assert!((model.coefficient("z2", j).unwrap() - want[j][1]).abs() < 1e-2);
        }
    }

    #[test]
    fn oracle_edge_cases() {
        let theta = gaussian(60, 4, 7);
        let dz = gaussian(60, 1, 8);
        let names: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
        let fit = support_oracle_matrix(&theta, &names, &dz, 0, 1e-4).unwrap();
        let mean = dz.mean();
        let var = dz.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 60.0;
        assert!(fit[0].support.is_empty());
        assert!((fit[0].mse - var).abs() < 1e-12);
        let big = gaussian(20, 13, 9);
        let names: Vec<String> = (0..13).map(|i| format!("f{i}")).collect();
        assert!(matches!(
            support_oracle_matrix(&big, &names, &gaussian(20, 1, 1), 2, 1e-4),
            Err(Error::TooManyFeatures(13))
        ));
    }

    #[test]
    fn oracle_recovers_planted_pair() {
        let theta = gaussian(100, 8, 10);
        let mut xi = DMatrix::zeros(8, 1);
        xi[(2, 0)] = 1.0;
        xi[(6, 0)] = -1.0;
        let dz = &theta * &xi;
        let names: Vec<String> = (0..8).map(|i| format!("f{i}")).collect();
        let fit = support_oracle_matrix(&theta, &names, &dz, 4, 1e-4).unwrap();
        assert_eq!(fit[0].support, [2, 6]);
    }
}
