//! Dense nonnegative matrices and the two normalized views used by the
//! bounding functionals.
//!
//! Convention: a matrix has `n` rows and `m` columns, and in a
//! [`StochasticMatrix`] it is the **columns** that are probability
//! distributions. A [`JointDistribution`] is normalized by its total mass
//! instead, with row marginal `p` (length `n`) and column marginal `q`
//! (length `m`).

use std::fmt::Write as _;
use std::ops::Deref;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::format::fmt_sig;

/// Entries in `[-CLAMP_TOL, 0)` are treated as rounding dust and set to 0.
pub const CLAMP_TOL: f64 = 1e-12;
/// Allowed deviation of a column (or total) sum from 1.
pub const SUM_TOL: f64 = 1e-10;
/// Relative singular-value threshold used by [`numerical_rank`] by default.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Sums at or below this are considered zero by the normalizers.
pub const ZERO_SUM_TOL: f64 = 1e-14;
/// A row whose maximum entry does not exceed this is a zero row.
pub const ZERO_ROW_TOL: f64 = 1e-12;

const MAX_RANK_RETRIES: usize = 10;

/// Dense `n x m` matrix with nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegMatrix {
    data: DMatrix<f64>,
}

impl NonnegMatrix {
    /// Validates and clamps `data`. Entries in `[-1e-12, 0)` become exactly 0;
    /// anything more negative is rejected.
    pub fn new(mut data: DMatrix<f64>) -> Result<Self> {
        Self::clamp_with(&mut data, CLAMP_TOL)?;
        Ok(Self { data })
    }

    /// Same as [`NonnegMatrix::new`] with a caller-chosen clamping band.
    pub(crate) fn with_clamp(mut data: DMatrix<f64>, clamp: f64) -> Result<Self> {
        Self::clamp_with(&mut data, clamp)?;
        Ok(Self { data })
    }

    fn clamp_with(data: &mut DMatrix<f64>, clamp: f64) -> Result<()> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                let v = data[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if v < 0.0 {
                    if v < -clamp {
                        return Err(Error::NegativeEntry { row: i, col: j, value: v });
                    }
                    data[(i, j)] = 0.0;
                }
            }
        }
        Ok(())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::EmptyMatrix);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::RaggedRows { row: i, expected: m, found: row.len() });
            }
        }
        Self::new(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self { data: DMatrix::identity(n, n) }
    }

    pub fn filled(n: usize, m: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(n, m, value))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows()).map(|i| self.row(i)).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.data.column_iter().map(|c| c.sum()).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data.row_iter().map(|r| r.sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.data.sum()
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn row_max(&self, i: usize) -> f64 {
        self.data.row(i).iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero_row(&self, i: usize) -> bool {
        self.row_max(i) <= ZERO_ROW_TOL
    }

    /// Indices of rows whose maximum entry exceeds [`ZERO_ROW_TOL`].
    pub fn nonzero_rows(&self) -> Vec<usize> {
        (0..self.nrows()).filter(|&i| !self.is_zero_row(i)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self { data: self.data.transpose() }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.ncols()) {
            return Err(Error::DimensionMismatch(format!("column {bad} out of range")));
        }
        Ok(Self { data: self.data.select_columns(cols) })
    }

    /// Parses the plain CSV matrix format: one row per line, no header.
    /// Blank lines are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno + 1,
                        message: format!("{:?}: {e}", tok.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_str(&text)
    }

    /// Renders the matrix in the CSV format with 12 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", fmt_sig(self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv_string())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))
    }
}

impl Serialize for NonnegMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NonnegMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        NonnegMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Number of singular values above `rel_tol * sigma_max`. The zero matrix has
/// rank 0.
pub fn numerical_rank(m: &NonnegMatrix, rel_tol: f64) -> usize {
    rank_of(m.as_matrix(), rel_tol)
}

pub(crate) fn rank_of(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = a.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Nonnegative matrix whose columns each sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StochasticMatrix {
    base: NonnegMatrix,
}

impl StochasticMatrix {
    pub fn new(base: NonnegMatrix) -> Result<Self> {
        for (col, sum) in base.column_sums().into_iter().enumerate() {
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::NotStochastic { col, sum });
            }
        }
        Ok(Self { base })
    }

    pub fn identity(n: usize) -> Self {
        Self { base: NonnegMatrix::identity(n) }
    }

    /// The `n x m` matrix with every entry `1/n`.
    pub fn uniform(n: usize, m: usize) -> Result<Self> {
        Self::new(NonnegMatrix::filled(n, m, 1.0 / n as f64)?)
    }

    pub fn as_nonneg(&self) -> &NonnegMatrix {
        &self.base
    }

    pub fn into_inner(self) -> NonnegMatrix {
        self.base
    }
}

impl Deref for StochasticMatrix {
    type Target = NonnegMatrix;
    fn deref(&self) -> &NonnegMatrix {
        &self.base
    }
}

/// Nonnegative matrix of total mass 1 with cached marginals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDistribution {
    base: NonnegMatrix,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl JointDistribution {
    pub fn new(base: NonnegMatrix) -> Result<Self> {
        let total = base.total();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::NotJoint(total));
        }
        let p = base.row_sums();
        let q = base.column_sums();
        Ok(Self { base, p, q })
    }

    /// Row marginal, length `n`.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Column marginal, length `m`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn as_nonneg(&self) -> &NonnegMatrix {
        &self.base
    }

    pub fn into_inner(self) -> NonnegMatrix {
        self.base
    }
}

impl Deref for JointDistribution {
    type Target = NonnegMatrix;
    fn deref(&self) -> &NonnegMatrix {
        &self.base
    }
}

/// Divides every column by its sum.
pub fn column_normalize(m: &NonnegMatrix) -> Result<StochasticMatrix> {
    let mut data = m.as_matrix().clone();
    for (j, mut col) in data.column_iter_mut().enumerate() {
        let sum = col.sum();
        if sum <= ZERO_SUM_TOL {
            return Err(Error::ZeroColumn(j));
        }
        col /= sum;
    }
    StochasticMatrix::new(NonnegMatrix::new(data)?)
}

/// Divides every entry by the total mass.
pub fn global_normalize(m: &NonnegMatrix) -> Result<JointDistribution> {
    let total = m.total();
    if total <= ZERO_SUM_TOL {
        return Err(Error::ZeroMatrix);
    }
    JointDistribution::new(NonnegMatrix::new(m.as_matrix() / total)?)
}

/// `out[i][j] = row_factors[i] * m[i][j] * col_factors[j]`.
pub fn scale(m: &NonnegMatrix, row_factors: &[f64], col_factors: &[f64]) -> Result<NonnegMatrix> {
    if row_factors.len() != m.nrows() {
        return Err(Error::FactorCount { expected: m.nrows(), found: row_factors.len() });
    }
    if col_factors.len() != m.ncols() {
        return Err(Error::FactorCount { expected: m.ncols(), found: col_factors.len() });
    }
    for (index, &value) in row_factors.iter().chain(col_factors).enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveFactor { index, value });
        }
    }
    let data = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        row_factors[i] * m.get(i, j) * col_factors[j]
    });
    NonnegMatrix::new(data)
}

/// Random `n x m` stochastic matrix of rank exactly `r`: the column
/// normalization of `U V` with `U` (`n x r`) and `V` (`r x m`) drawn uniform
/// on `(0, 1]`.
pub fn random_rank_r_stochastic(n: usize, m: usize, r: usize, seed: u64) -> Result<StochasticMatrix> {
    if r == 0 || r > n.min(m) {
        return Err(Error::InvalidRank { n, m, r });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RANK_RETRIES {
        let u = DMatrix::from_fn(n, r, |_, _| 1.0 - rng.gen::<f64>());
        let v = DMatrix::from_fn(r, m, |_, _| 1.0 - rng.gen::<f64>());
        let s = column_normalize(&NonnegMatrix::new(u * v)?)?;
        if numerical_rank(&s, DEFAULT_RANK_TOL) == r {
            return Ok(s);
        }
    }
    Err(Error::RankDeficientAfterRetries { r, retries: MAX_RANK_RETRIES })
}
