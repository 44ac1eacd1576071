//! Checks for claimed nonnegative and PSD factorizations of a target matrix,
//! and the fixture file format that carries them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FactorSide, Result};
use crate::functionals::{b2, b3, b4, b5, BOUND_SLACK};
use crate::matrix::{column_normalize, global_normalize, NonnegMatrix};
use crate::qp::{min_eigenvalue, DEFAULT_QP_TOL};

pub const DEFAULT_VERIFY_TOL: f64 = 1e-8;
pub const FACTOR_SYMMETRY_TOL: f64 = 1e-10;
pub const FACTOR_PSD_FLOOR: f64 = 1e-9;

/// `A = left * right` with both factors entrywise nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegFactorization {
    left: NonnegMatrix,
    right: NonnegMatrix,
}

impl NonnegFactorization {
    pub fn new(left: NonnegMatrix, right: NonnegMatrix) -> Result<Self> {
        if left.ncols() != right.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "left is {}x{}, right is {}x{}",
                left.nrows(),
                left.ncols(),
                right.nrows(),
                right.ncols()
            )));
        }
        Ok(Self { left, right })
    }

    /// Inner dimension `k`.
    pub fn inner_dim(&self) -> usize {
        self.left.ncols()
    }

    pub fn left(&self) -> &NonnegMatrix {
        &self.left
    }

    pub fn right(&self) -> &NonnegMatrix {
        &self.right
    }

    /// `B_i = diag(left row i)`, `C_j = diag(right column j)`.
    pub fn diagonal_embedding(&self) -> PSDFactorization {
        let k = self.inner_dim();
        let row_factors = (0..self.left.nrows())
            .map(|i| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.left.row(i))))
            .collect();
        let col_factors = (0..self.right.ncols())
            .map(|j| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.right.column(j))))
            .collect();
        PSDFactorization { size: k, row_factors, col_factors }
    }
}

/// `A(i, j) = trace(B_i C_j)` with real symmetric PSD `size x size` factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PSDFactorization {
    size: usize,
    row_factors: Vec<DMatrix<f64>>,
    col_factors: Vec<DMatrix<f64>>,
}

impl PSDFactorization {
    /// Validates shapes, symmetry (1e-10) and PSD-ness (eigenvalues >= -1e-9).
    pub fn new(size: usize, row_factors: Vec<DMatrix<f64>>, col_factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if size == 0 {
            return Err(Error::DimensionMismatch("factor size must be positive".into()));
        }
        for (side, list) in [(FactorSide::Row, &row_factors), (FactorSide::Column, &col_factors)] {
            for (index, f) in list.iter().enumerate() {
                if f.nrows() != size || f.ncols() != size {
                    return Err(Error::DimensionMismatch(format!(
                        "{side} factor {index} is {}x{}, expected {size}x{size}",
                        f.nrows(),
                        f.ncols()
                    )));
                }
                if (f - f.transpose()).amax() > FACTOR_SYMMETRY_TOL {
                    return Err(Error::FactorNotSymmetric { index, side });
                }
                let min_eigenvalue = min_eigenvalue(f);
                if min_eigenvalue < -FACTOR_PSD_FLOOR {
                    return Err(Error::NotPsd { index, side, min_eigenvalue });
                }
            }
        }
        Ok(Self { size, row_factors, col_factors })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row_factors(&self) -> &[DMatrix<f64>] {
        &self.row_factors
    }

    pub fn col_factors(&self) -> &[DMatrix<f64>] {
        &self.col_factors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verification {
    pub ok: bool,
    pub residual: f64,
}

pub fn verify_nonneg_factorization(a: &NonnegMatrix, f: &NonnegFactorization, tol: f64) -> Result<Verification> {
    if f.left.nrows() != a.nrows() || f.right.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "target is {}x{}, factorization gives {}x{}",
            a.nrows(),
            a.ncols(),
            f.left.nrows(),
            f.right.ncols()
        )));
    }
    let (left, right) = (f.left.as_matrix(), f.right.as_matrix());
    let mut residual = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let mut entry = 0.0;
            for k in 0..f.inner_dim() {
                entry += left[(i, k)] * right[(k, j)];
            }
            residual = residual.max((a.get(i, j) - entry).abs());
        }
    }
    Ok(Verification { ok: residual <= tol, residual })
}

pub fn verify_psd_factorization(a: &NonnegMatrix, f: &PSDFactorization, tol: f64) -> Result<Verification> {
    if f.row_factors.len() != a.nrows() || f.col_factors.len() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "target is {}x{}, factorization has {} row and {} column factors",
            a.nrows(),
            a.ncols(),
            f.row_factors.len(),
            f.col_factors.len()
        )));
    }
    let mut residual = 0.0f64;
    for (i, b) in f.row_factors.iter().enumerate() {
        for (j, c) in f.col_factors.iter().enumerate() {
            let tr = trace_product(b, c);
            residual = residual.max((a.get(i, j) - tr).abs());
        }
    }
    Ok(Verification { ok: residual <= tol, residual })
}

/// `trace(B C)`, summed in row-major order of `B`. For diagonal factors this
/// reduces to the same left-to-right sum as the nonnegative product.
fn trace_product(b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let mut tr = 0.0;
    for i in 0..b.nrows() {
        for k in 0..b.ncols() {
            tr += b[(i, k)] * c[(k, i)];
        }
    }
    tr
}

/// Values of `B2..B5` on the normalized target, as used by [`sanity_check_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalValues {
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub b5: f64,
}

pub fn functional_values(a: &NonnegMatrix) -> Result<FunctionalValues> {
    let joint = global_normalize(a)?;
    let stochastic = column_normalize(a)?;
    Ok(FunctionalValues {
        b2: b2(&joint),
        b3: b3(&stochastic, DEFAULT_QP_TOL)?,
        b4: b4(&stochastic),
        b5: b5(&stochastic, DEFAULT_QP_TOL)?,
    })
}

/// True iff `f.size()` is at least every bounding functional of `a`
/// (`B2` on the global normalization, the others on the column
/// normalization), up to relative slack 1e-6. A `false` points at a bug in
/// the functionals, since each one lower-bounds the PSD rank.
pub fn sanity_check_bounds(a: &NonnegMatrix, f: &PSDFactorization) -> Result<bool> {
    let v = functional_values(a)?;
    let size = f.size as f64 * (1.0 + BOUND_SLACK);
    Ok([v.b2, v.b3, v.b4, v.b5].iter().all(|&b| b <= size))
}

/// Factorization as written in a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FactorizationSpec {
    Nonneg { k: usize, left: Vec<Vec<f64>>, right: Vec<Vec<f64>> },
    Psd { r: usize, row_factors: Vec<Vec<Vec<f64>>>, col_factors: Vec<Vec<Vec<f64>>> },
}

/// One fixture: a target matrix and a claimed factorization of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default)]
    pub name: String,
    pub target: Vec<Vec<f64>>,
    pub factorization: FactorizationSpec,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    Many(Vec<Fixture>),
    One(Fixture),
}

/// Parses a fixture file holding either one fixture object or an array.
pub fn parse_fixtures(text: &str) -> Result<Vec<Fixture>, serde_json::Error> {
    Ok(match serde_json::from_str::<FixtureFile>(text)? {
        FixtureFile::Many(v) => v,
        FixtureFile::One(f) => vec![f],
    })
}

fn square_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("PSD factor is not square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureOutcome {
    pub name: String,
    pub verified: bool,
    pub residual: f64,
    pub declared_size: usize,
    pub sane: bool,
}

impl FixtureOutcome {
    pub fn passed(&self) -> bool {
        self.verified && self.sane
    }
}

impl Fixture {
    /// The factorization as PSD factors (nonnegative ones via diagonal embedding).
    pub fn psd_factorization(&self) -> Result<PSDFactorization> {
        match &self.factorization {
            FactorizationSpec::Nonneg { k, left, right } => {
                let f = NonnegFactorization::new(NonnegMatrix::from_rows(left)?, NonnegMatrix::from_rows(right)?)?;
                if f.inner_dim() != *k {
                    return Err(Error::DimensionMismatch(format!("declared k = {k}, factors have {}", f.inner_dim())));
                }
                Ok(f.diagonal_embedding())
            }
            FactorizationSpec::Psd { r, row_factors, col_factors } => {
                let rows = row_factors.iter().map(|m| square_from_rows(m)).collect::<Result<Vec<_>>>()?;
                let cols = col_factors.iter().map(|m| square_from_rows(m)).collect::<Result<Vec<_>>>()?;
                PSDFactorization::new(*r, rows, cols)
            }
        }
    }

    /// Verifies the factorization and, when it verifies, runs the bound sanity check.
    pub fn check(&self) -> Result<FixtureOutcome> {
        let target = NonnegMatrix::from_rows(&self.target)?;
        let tol = self.tol.unwrap_or(DEFAULT_VERIFY_TOL);
        let psd = self.psd_factorization()?;
        let v = match &self.factorization {
            FactorizationSpec::Nonneg { left, right, .. } => {
                let f = NonnegFactorization::new(NonnegMatrix::from_rows(left)?, NonnegMatrix::from_rows(right)?)?;
                verify_nonneg_factorization(&target, &f, tol)?
            }
            FactorizationSpec::Psd { .. } => verify_psd_factorization(&target, &psd, tol)?,
        };
        let sane = v.ok && sanity_check_bounds(&target, &psd)?;
        Ok(FixtureOutcome {
            name: self.name.clone(),
            verified: v.ok,
            residual: v.residual,
            declared_size: psd.size(),
            sane,
        })
    }
}
