//! Closed-form V/H representations of a few standard polytopes and their
//! slack matrices.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{bound_report, BoundReport, ReportOptions};
use crate::matrix::{column_normalize, numerical_rank, NonnegMatrix, DEFAULT_RANK_TOL};

/// Slack entries in `[-1e-10, 0)` are clamped to 0.
pub const SLACK_TOL: f64 = 1e-10;
/// Largest dimension accepted for the exponential-size families.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Simplex,
    Hypercube,
    CrossPolytope,
    RegularNgon,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Simplex, Family::Hypercube, Family::CrossPolytope, Family::RegularNgon];

    pub fn name(self) -> &'static str {
        match self {
            Family::Simplex => "simplex",
            Family::Hypercube => "hypercube",
            Family::CrossPolytope => "cross_polytope",
            Family::RegularNgon => "regular_ngon",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnsupportedFamily(s.to_string()))
    }
}

/// The inequality `<x, normal> <= offset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolytopeHV {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<Facet>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(d: usize, i: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = sign;
    v
}

impl PolytopeHV {
    /// Checks that every vertex satisfies every facet and that each facet is
    /// tight on at least `dim` vertices.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 2 {
            return Err(Error::InvalidPolytope(format!("{} vertices", self.vertices.len())));
        }
        let d = self.dim;
        if self.vertices.iter().any(|v| v.len() != d) || self.facets.iter().any(|f| f.normal.len() != d) {
            return Err(Error::InvalidPolytope("coordinate length differs from dim".into()));
        }
        for (j, f) in self.facets.iter().enumerate() {
            let mut tight = 0;
            for (i, v) in self.vertices.iter().enumerate() {
                let slack = f.offset - dot(v, &f.normal);
                if slack < -SLACK_TOL {
                    return Err(Error::NegativeSlack { vertex: i, facet: j, value: slack });
                }
                if slack.abs() <= SLACK_TOL {
                    tight += 1;
                }
            }
            if tight < d {
                return Err(Error::InvalidPolytope(format!("facet {j} is tight at {tight} < {d} vertices")));
            }
        }
        Ok(())
    }
}

/// Builds a member of `family`: `param` is the dimension, or the number of
/// sides for `regular_ngon`.
pub fn make_polytope(family: Family, param: usize) -> Result<PolytopeHV> {
    match family {
        Family::RegularNgon if param < 3 => {
            return Err(Error::BadParam(format!("regular_ngon needs k >= 3, got {param}")));
        }
        Family::Simplex | Family::Hypercube | Family::CrossPolytope if !(1..=MAX_DIM).contains(&param) => {
            return Err(Error::BadParam(format!("{family} needs 1 <= d <= {MAX_DIM}, got {param}")));
        }
        _ => {}
    }
    let p = match family {
        Family::Simplex => simplex(param),
        Family::Hypercube => hypercube(param),
        Family::CrossPolytope => cross_polytope(param),
        Family::RegularNgon => regular_ngon(param),
    };
    p.validate()?;
    Ok(p)
}

/// `conv{0, e_1, .., e_d}` with facets `x_i >= 0` then `sum x <= 1`.
fn simplex(d: usize) -> PolytopeHV {
    let mut vertices = vec![vec![0.0; d]];
    vertices.extend((0..d).map(|i| unit(d, i, 1.0)));
    let mut facets: Vec<Facet> = (0..d).map(|i| Facet { normal: unit(d, i, -1.0), offset: 0.0 }).collect();
    facets.push(Facet { normal: vec![1.0; d], offset: 1.0 });
    PolytopeHV { dim: d, vertices, facets }
}

/// `[0, 1]^d`, vertices in binary order, facets `x_i >= 0`, `x_i <= 1` per axis.
fn hypercube(d: usize) -> PolytopeHV {
    let vertices = (0..1usize << d)
        .map(|bits| (0..d).map(|i| ((bits >> i) & 1) as f64).collect())
        .collect();
    let facets = (0..d)
        .flat_map(|i| [Facet { normal: unit(d, i, -1.0), offset: 0.0 }, Facet { normal: unit(d, i, 1.0), offset: 1.0 }])
        .collect();
    PolytopeHV { dim: d, vertices, facets }
}

/// `conv{+-e_i}` with one facet `<sigma, x> <= 1` per sign vector.
fn cross_polytope(d: usize) -> PolytopeHV {
    let vertices = (0..d).flat_map(|i| [unit(d, i, 1.0), unit(d, i, -1.0)]).collect();
    let facets = (0..1usize << d)
        .map(|bits| Facet {
            normal: (0..d).map(|i| if (bits >> i) & 1 == 1 { -1.0 } else { 1.0 }).collect(),
            offset: 1.0,
        })
        .collect();
    PolytopeHV { dim: d, vertices, facets }
}

/// Regular `k`-gon inscribed in the unit circle; facet `j` supports the edge
/// from vertex `j` to `j + 1`.
fn regular_ngon(k: usize) -> PolytopeHV {
    let vertices = (0..k)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / k as f64;
            vec![t.cos(), t.sin()]
        })
        .collect();
    let offset = (PI / k as f64).cos();
    let facets = (0..k)
        .map(|j| {
            let t = (2 * j + 1) as f64 * PI / k as f64;
            Facet { normal: vec![t.cos(), t.sin()], offset }
        })
        .collect();
    PolytopeHV { dim: 2, vertices, facets }
}

/// Vertex-by-facet slack matrix with its source polytope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackMatrix {
    pub base: NonnegMatrix,
    pub source: PolytopeHV,
}

/// `S(i, j) = b_j - <v_i, a_j>`, clamped within `1e-10` of zero; checks that
/// the rank is `dim + 1`.
pub fn slack_matrix(p: &PolytopeHV) -> Result<SlackMatrix> {
    let (n, m) = (p.vertices.len(), p.facets.len());
    if n == 0 || m == 0 {
        return Err(Error::InvalidPolytope("no vertices or facets".into()));
    }
    let mut data = DMatrix::zeros(n, m);
    for (i, v) in p.vertices.iter().enumerate() {
        for (j, f) in p.facets.iter().enumerate() {
            let s = f.offset - dot(v, &f.normal);
            if s < -SLACK_TOL {
                return Err(Error::NegativeSlack { vertex: i, facet: j, value: s });
            }
            data[(i, j)] = if s.abs() <= SLACK_TOL { 0.0 } else { s };
        }
    }
    let base = NonnegMatrix::with_clamp(data, SLACK_TOL)?;
    let rank = numerical_rank(&base, DEFAULT_RANK_TOL);
    if rank != p.dim + 1 {
        return Err(Error::SlackRank { expected: p.dim + 1, found: rank });
    }
    Ok(SlackMatrix { base, source: p.clone() })
}

/// Bound report on the column-normalized slack matrix.
pub fn slack_bound_report(p: &PolytopeHV, opts: &ReportOptions) -> Result<BoundReport> {
    let slack = slack_matrix(p)?;
    let stochastic = column_normalize(&slack.base)?;
    let report = bound_report(&stochastic, opts)?;
    if report.rank != p.dim + 1 {
        return Err(Error::SlackRank { expected: p.dim + 1, found: report.rank });
    }
    Ok(report)
}
