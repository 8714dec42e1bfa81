//! Candidate feature libraries `Θ(Z)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibrarySpec {
    pub poly_degree: usize,
    pub include_trig: bool,
    pub include_exp: bool,
    /// Mixed monomials such as `z1*z2`; pure powers only when false.
    pub cross_terms: bool,
    /// Extra named input columns (PDE operator channels such as `Δu`).
    pub custom: Vec<String>,
    /// Custom columns are multiplied by state monomials up to this degree.
    pub custom_degree: usize,
}

impl Default for LibrarySpec {
    fn default() -> Self {
        Self { poly_degree: 3, include_trig: false, include_exp: false, cross_terms: true, custom: vec![], custom_degree: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    /// Exponent per state variable; all zero is the constant.
    Monomial(Vec<u32>),
    Custom { index: usize, monomial: Vec<u32> },
    Sin(usize),
    Cos(usize),
    Exp(usize),
}

/// Monomials of exact `degree` over `d` variables in canonical order
/// (`z1^2, z1*z2, z2^2`): non-decreasing variable index multisets.
fn monomials(d: usize, degree: usize, cross: bool) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for v in start..d {
            cur.push(v);
            rec(d, left - 1, v, cur, out);
            cur.pop();
        }
    }
    let mut sets = Vec::new();
    rec(d, degree, 0, &mut Vec::new(), &mut sets);
    sets.into_iter()
        .filter(|s| cross || s.windows(2).all(|w| w[0] == w[1]))
        .map(|s| {
            let mut e = vec![0u32; d];
            for v in s {
                e[v] += 1;
            }
            e
        })
        .collect()
}

fn monomial_name(exps: &[u32], names: &[String]) -> String {
    let parts: Vec<String> = exps
        .iter()
        .zip(names)
        .filter(|(e, _)| **e > 0)
        .map(|(e, n)| if *e == 1 { n.clone() } else { format!("{n}^{e}") })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

fn monomial_value(exps: &[u32], z: &[f64]) -> f64 {
    exps.iter().zip(z).fold(1.0, |acc, (&e, &v)| if e == 0 { acc } else { acc * v.powi(e as i32) })
}

/// A library layout resolved against concrete state and custom column names.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLibrary {
    pub spec: LibrarySpec,
    pub state_names: Vec<String>,
    pub names: Vec<String>,
    terms: Vec<Term>,
}

impl CompiledLibrary {
    pub fn new(spec: &LibrarySpec, state_names: &[String]) -> Result<Self> {
        let d = state_names.len();
        if d == 0 {
            return Err(Error::pre("library needs at least one state variable"));
        }
        let mut terms = Vec::new();
        for deg in 0..=spec.poly_degree {
            terms.extend(monomials(d, deg, spec.cross_terms).into_iter().map(Term::Monomial));
        }
        for index in 0..spec.custom.len() {
            for deg in 0..=spec.custom_degree {
                terms.extend(monomials(d, deg, spec.cross_terms).into_iter().map(|m| Term::Custom { index, monomial: m }));
            }
        }
        if spec.include_trig {
            terms.extend((0..d).map(Term::Sin));
            terms.extend((0..d).map(Term::Cos));
        }
        if spec.include_exp {
            terms.extend((0..d).map(Term::Exp));
        }
        let names: Vec<String> = terms
            .iter()
            .map(|t| match t {
                Term::Monomial(e) => monomial_name(e, state_names),
                Term::Custom { index, monomial } => {
                    let m = monomial_name(monomial, state_names);
                    if m == "1" {
                        spec.custom[*index].clone()
                    } else {
                        format!("{m}*{}", spec.custom[*index])
                    }
                }
                Term::Sin(i) => format!("sin({})", state_names[*i]),
                Term::Cos(i) => format!("cos({})", state_names[*i]),
                Term::Exp(i) => format!("exp({})", state_names[*i]),
            })
            .collect();
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::pre(format!("duplicate feature name `{dup}`")));
        }
        Ok(Self { spec: spec.clone(), state_names: state_names.to_vec(), names, terms })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn custom_count(&self) -> usize {
        self.spec.custom.len()
    }

    /// Evaluates every feature at one state (plus custom column values).
    pub fn eval_row(&self, z: &[f64], custom: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = match t {
                Term::Monomial(e) => monomial_value(e, z),
                Term::Custom { index, monomial } => custom[*index] * monomial_value(monomial, z),
                Term::Sin(i) => z[*i].sin(),
                Term::Cos(i) => z[*i].cos(),
                Term::Exp(i) => z[*i].exp(),
            };
        }
    }

    /// `∂θ_f/∂z_i`, written row-major into `out` (`F × d`). Custom columns
    /// are treated as constants.
    pub fn eval_jacobian(&self, z: &[f64], custom: &[f64], out: &mut [f64]) {
        let d = z.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (f, t) in self.terms.iter().enumerate() {
            let row = &mut out[f * d..(f + 1) * d];
            let (scale, exps) = match t {
                Term::Monomial(e) => (1.0, e),
                Term::Custom { index, monomial } => (custom[*index], monomial),
                Term::Sin(i) => {
                    row[*i] = z[*i].cos();
                    continue;
                }
                Term::Cos(i) => {
                    row[*i] = -z[*i].sin();
                    continue;
                }
                Term::Exp(i) => {
                    row[*i] = z[*i].exp();
                    continue;
                }
            };
            for i in 0..d {
                if exps[i] == 0 {
                    continue;
                }
                let mut e = exps.clone();
                e[i] -= 1;
                row[i] = scale * exps[i] as f64 * monomial_value(&e, z);
            }
        }
    }
}

/// Evaluated library: `M × F` feature matrix with canonical column names.
#[derive(Debug, Clone)]
pub struct CandidateLibrary {
    pub layout: CompiledLibrary,
    pub matrix: DMatrix<f64>,
}

impl CandidateLibrary {
    pub fn names(&self) -> &[String] {
        &self.layout.names
    }

    pub fn spec(&self) -> &LibrarySpec {
        &self.layout.spec
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Keeps only the listed columns (in the given order).
    pub fn select_columns(&self, cols: &[usize]) -> DMatrix<f64> {
        self.matrix.select_columns(cols)
    }
}

/// Evaluates the library on row-major states `z` (`M × d`) and optional
/// row-major custom columns (`M × spec.custom.len()`).
pub fn build_library(
    z: &[f64],
    state_names: &[String],
    spec: &LibrarySpec,
    custom: Option<&[f64]>,
) -> Result<CandidateLibrary> {
    let layout = CompiledLibrary::new(spec, state_names)?;
    let d = layout.state_dim();
    let c = layout.custom_count();
    if z.len() % d != 0 {
        return Err(Error::Shape(format!("{} state values not divisible by dimension {d}", z.len())));
    }
    let m = z.len() / d;
    let custom = match (c, custom) {
        (0, _) => None,
        (_, Some(v)) if v.len() == m * c => Some(v),
        (_, Some(v)) => {
            return Err(Error::Shape(format!("custom columns hold {} values, expected {}", v.len(), m * c)))
        }
        (_, None) => return Err(Error::pre("library spec names custom columns but none were supplied")),
    };
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::pre("state matrix contains non-finite values"));
    }
    let f = layout.len();
    let mut matrix = DMatrix::zeros(m, f);
    let mut row = vec![0.0; f];
    for k in 0..m {
        let cv = custom.map(|v| &v[k * c..(k + 1) * c]).unwrap_or(&[]);
        layout.eval_row(&z[k * d..(k + 1) * d], cv, &mut row);
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::FeatureOverflow { feature: layout.names[j].clone(), row: k });
            }
            matrix[(k, j)] = *v;
        }
    }
    Ok(CandidateLibrary { layout, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zn(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("z{i}")).collect()
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn degree_two_names() {
        let spec = LibrarySpec { poly_degree: 2, ..Default::default() };
        let lib = CompiledLibrary::new(&spec, &zn(2)).unwrap();
        assert_eq!(lib.names, ["1", "z1", "z2", "z1^2", "z1*z2", "z2^2"]);
    }

    #[test]
    fn column_counts_match_stars_and_bars() {
        for d in 1..=4 {
            for deg in 0..=4 {
                let spec = LibrarySpec { poly_degree: deg, ..Default::default() };
                let lib = CompiledLibrary::new(&spec, &zn(d)).unwrap();
                assert_eq!(lib.len(), binom(d + deg, deg), "d={d} deg={deg}");
            }
        }
        let spec = LibrarySpec { poly_degree: 3, ..Default::default() };
        assert_eq!(CompiledLibrary::new(&spec, &zn(3)).unwrap().len(), 20);
        let pure = LibrarySpec { poly_degree: 3, cross_terms: false, ..Default::default() };
        assert_eq!(CompiledLibrary::new(&pure, &zn(3)).unwrap().len(), 1 + 3 * 3);
    }

    #[test]
    fn origin_row_with_trig() {
        let spec = LibrarySpec { poly_degree: 3, include_trig: true, ..Default::default() };
        let lib = build_library(&[0.0, 0.0], &zn(2), &spec, None).unwrap();
        let names = lib.names();
        assert_eq!(&names[10..], ["sin(z1)", "sin(z2)", "cos(z1)", "cos(z2)"]);
        let row: Vec<f64> = lib.matrix.row(0).iter().copied().collect();
        let mut expect = vec![0.0; 14];
        expect[0] = 1.0;
        expect[12] = 1.0;
        expect[13] = 1.0;
        assert_eq!(row, expect);
    }

    #[test]
    fn custom_columns_and_overflow() {
        let spec = LibrarySpec { poly_degree: 2, custom: vec!["Δu".into()], custom_degree: 1, ..Default::default() };
        let names = vec!["u".to_string()];
        let lib = build_library(&[2.0], &names, &spec, Some(&[5.0])).unwrap();
        assert_eq!(lib.names(), ["1", "u", "u^2", "Δu", "u*Δu"]);
        assert_eq!(lib.matrix.row(0).iter().copied().collect::<Vec<_>>(), [1.0, 2.0, 4.0, 5.0, 10.0]);
        let spec = LibrarySpec { poly_degree: 1, include_exp: true, ..Default::default() };
        match build_library(&[1000.0], &names, &spec, None) {
            Err(Error::FeatureOverflow { feature, .. }) => assert_eq!(feature, "exp(u)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = LibrarySpec { poly_degree: 3, include_trig: true, include_exp: true, ..Default::default() };
        let lib = CompiledLibrary::new(&spec, &zn(2)).unwrap();
        let z = [0.3, -0.7];
        let f = lib.len();
        let mut jac = vec![0.0; f * 2];
        lib.eval_jacobian(&z, &[], &mut jac);
        let h = 1e-6;
        for i in 0..2 {
            let (mut zp, mut zm) = (z, z);
            zp[i] += h;
            zm[i] -= h;
            let (mut a, mut b) = (vec![0.0; f], vec![0.0; f]);
            lib.eval_row(&zp, &[], &mut a);
            lib.eval_row(&zm, &[], &mut b);
            for k in 0..f {
                assert!(((a[k] - b[k]) / (2.0 * h) - jac[k * 2 + i]).abs() < 1e-8, "{}", lib.names[k]);
            }
        }
    }
}
