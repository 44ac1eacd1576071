//! Fidelity, mutual information, column-spread statistics and the four
//! bounding functionals `B2..B5`, together with the polynomial-in-rank upper
//! bounds they are checked against.
//!
//! Base conventions: mutual information is in bits; the `ln m` appearing in
//! the `B3`/`B5` bounds is the natural logarithm.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::matrix::{
    column_normalize, global_normalize, numerical_rank, JointDistribution, StochasticMatrix, DEFAULT_RANK_TOL, SUM_TOL,
    ZERO_ROW_TOL,
};
use crate::qp::{self, QPSolution, QpOptions, DEFAULT_QP_TOL};

/// Relative slack allowed when comparing a functional with its bound.
pub const BOUND_SLACK: f64 = 1e-6;

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::NotADistribution("empty vector".into()));
    }
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::NotADistribution(format!("entry {v}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::NotADistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// `F(p, q) = sum_k sqrt(p_k q_k)`.
pub fn fidelity(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum())
}

/// Squared pairwise fidelities of the columns of a stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityGram {
    entries: DMatrix<f64>,
}

impl FidelityGram {
    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn min_eigenvalue(&self) -> f64 {
        qp::min_eigenvalue(&self.entries)
    }
}

/// `G[i][j] = F(M_i, M_j)^2` over the columns `M_i`. Built from the Gram
/// matrix of entrywise square roots, so `G` is its Hadamard square.
pub fn fidelity_gram(m: &StochasticMatrix) -> FidelityGram {
    let roots = m.as_matrix().map(f64::sqrt);
    let cols = m.ncols();
    let mut entries = DMatrix::zeros(cols, cols);
    for i in 0..cols {
        for j in i..cols {
            let f = roots.column(i).dot(&roots.column(j));
            entries[(i, j)] = f * f;
            entries[(j, i)] = f * f;
        }
    }
    FidelityGram { entries }
}

/// `I(X:Y)` in bits, skipping zero entries (`0 log 0 = 0`).
pub fn mutual_information(j: &JointDistribution) -> f64 {
    let (p, q) = (j.p(), j.q());
    let mut info = 0.0;
    for r in 0..j.nrows() {
        for c in 0..j.ncols() {
            let v = j.get(r, c);
            if v > 0.0 {
                info += v * (v / (p[r] * q[c])).log2();
            }
        }
    }
    if (-1e-10..0.0).contains(&info) {
        0.0
    } else {
        info
    }
}

/// `B2 = 2^I(X:Y)`.
pub fn b2(j: &JointDistribution) -> f64 {
    mutual_information(j).exp2()
}

/// `B3 = 1 / min_q q' G q` over the simplex, with the solver certificate.
pub fn b3_detail(m: &StochasticMatrix, opts: &QpOptions) -> Result<(f64, QPSolution)> {
    let gram = fidelity_gram(m);
    let sol = qp::solve_simplex(gram.as_matrix(), opts)?;
    Ok((1.0 / sol.value, sol))
}

pub fn b3(m: &StochasticMatrix, qp_tol: f64) -> Result<f64> {
    b3_detail(m, &QpOptions::with_tol(qp_tol)).map(|(v, _)| v)
}

/// `B4 = sum_i max_j M(i, j)`.
pub fn b4(m: &StochasticMatrix) -> f64 {
    (0..m.nrows()).map(|i| m.row_max(i)).sum()
}

/// Per-row solver data for [`b5_detail`]; `None` for zero rows.
pub type B5Rows = Vec<Option<QPSolution>>;

/// `B5 = sum_i max_q (c_i.q) / sqrt(q' G q)` where `c_i` is row `i`.
///
/// The ratio is invariant under positive scaling of `q`, so each row's
/// maximum equals `1 / sqrt(w)` with `w = min { q' G q : q >= 0, c_i.q = 1 }`.
/// Rows whose maximum entry is at most `1e-12` contribute 0.
pub fn b5_detail(m: &StochasticMatrix, opts: &QpOptions) -> Result<(f64, B5Rows)> {
    let gram = fidelity_gram(m);
    let mut total = 0.0;
    let mut rows = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        if m.row_max(i) <= ZERO_ROW_TOL {
            rows.push(None);
            continue;
        }
        let sol = qp::solve_weighted_slice(gram.as_matrix(), &m.row(i), opts)?;
        total += 1.0 / sol.value.sqrt();
        rows.push(Some(sol));
    }
    Ok((total, rows))
}

pub fn b5(m: &StochasticMatrix, qp_tol: f64) -> Result<f64> {
    b5_detail(m, &QpOptions::with_tol(qp_tol)).map(|(v, _)| v)
}

/// Half the l1 column-distance sum, `Z(M) = 1/2 sum_{i,j} |M_i - M_j|`.
pub fn z_value(m: &StochasticMatrix) -> f64 {
    let cols: Vec<Vec<f64>> = (0..m.ncols()).map(|j| m.column(j)).collect();
    let mut z = 0.0;
    // unordered pairs i < j: exactly half of the ordered double sum
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            z += cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
    }
    z
}

/// Mean statistical distance between columns, `S(M) = Z(M) / m^2`.
pub fn mean_statistical_distance(m: &StochasticMatrix) -> f64 {
    let cols = m.ncols() as f64;
    z_value(m) / (cols * cols)
}

/// `Z` of the extremal `r`-row stochastic matrix with `m` columns:
/// with `m = s r + p`, `p < r`, this is `r (m - s) s + p m - p - 2 s p`.
pub fn extremal_z(r: usize, m: usize) -> f64 {
    assert!(r >= 1 && m >= 1, "extremal_z needs r, m >= 1");
    let (r, m) = (r as i128, m as i128);
    let s = m / r;
    let p = m - s * r;
    (r * (m - s) * s + p * m - p - 2 * s * p) as f64
}

/// The `r x m` 0/1 matrix whose column `j` is the basis vector `e_{j mod r}`.
pub fn extremal_matrix(r: usize, m: usize) -> Result<StochasticMatrix> {
    let data = DMatrix::from_fn(r, m, |i, j| if j % r == i { 1.0 } else { 0.0 });
    StochasticMatrix::new(crate::matrix::NonnegMatrix::new(data)?)
}

/// Sorts `q` descending and returns the 1-based `s` maximizing `s * q_s`
/// (ties go to the largest `s`) along with that value. `q` must be nonempty.
pub fn harmonic_pigeonhole(q: &[f64]) -> (usize, f64) {
    assert!(!q.is_empty(), "harmonic_pigeonhole needs a nonempty distribution");
    let mut sorted = q.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut best = (1, sorted[0]);
    for (k, &v) in sorted.iter().enumerate().skip(1) {
        let cand = (k + 1) as f64 * v;
        if cand >= best.1 {
            best = (k + 1, cand);
        }
    }
    best
}

/// `1 / (ln m + 1)`, the guaranteed lower bound on `max_s s q_s`.
pub fn harmonic_floor(m: usize) -> f64 {
    1.0 / ((m as f64).ln() + 1.0)
}

pub fn bound_b3(r: usize, m: usize) -> f64 {
    let l = (m as f64).ln() + 1.0;
    l * l * (r * r) as f64
}

pub fn bound_b5(r: usize, m: usize) -> f64 {
    ((m as f64).ln() + 1.0) * (r * r) as f64
}

/// Whether `value <= bound * (1 + BOUND_SLACK)`.
pub fn within_bound(value: f64, bound: f64) -> bool {
    value <= bound * (1.0 + BOUND_SLACK)
}

/// Which of `B2..B5` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalSet {
    pub b2: bool,
    pub b3: bool,
    pub b4: bool,
    pub b5: bool,
}

impl FunctionalSet {
    pub const ALL: Self = Self { b2: true, b3: true, b4: true, b5: true };
    pub const NONE: Self = Self { b2: false, b3: false, b4: false, b5: false };
}

impl Default for FunctionalSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl FromStr for FunctionalSet {
    type Err = Error;

    /// Comma list such as `b2,b4`; `all` selects everything.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = Self::NONE;
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok.to_ascii_lowercase().as_str() {
                "b2" => set.b2 = true,
                "b3" => set.b3 = true,
                "b4" => set.b4 = true,
                "b5" => set.b5 = true,
                "all" => set = Self::ALL,
                other => return Err(Error::BadParam(format!("unknown functional {other:?}"))),
            }
        }
        if set == Self::NONE {
            return Err(Error::BadParam("no functionals selected".into()));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub qp_tol: f64,
    pub rank_tol: f64,
    pub functionals: FunctionalSet,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { qp_tol: DEFAULT_QP_TOL, rank_tol: DEFAULT_RANK_TOL, functionals: FunctionalSet::ALL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Flags {
    pub b2: Option<bool>,
    pub b3: Option<bool>,
    pub b4: Option<bool>,
    pub b5: Option<bool>,
}

/// Solver diagnostics attached to a report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QpDiagnostics {
    pub b3_gap: Option<f64>,
    pub b3_iterations: Option<usize>,
    pub b3_shift: Option<f64>,
    /// `min_q q' G q` from the `B3` solve.
    pub b3_min_form: Option<f64>,
    pub b5_max_gap: Option<f64>,
    pub b5_iterations: Option<usize>,
}

/// Functional values, rank, rank bounds and pass flags for one matrix.
/// Functionals that were not selected are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    pub rank_tol: f64,
    pub b2: Option<f64>,
    pub b3: Option<f64>,
    pub b4: Option<f64>,
    pub b5: Option<f64>,
    pub bound_b2: f64,
    pub bound_b3: f64,
    pub bound_b4: f64,
    pub bound_b5: f64,
    pub satisfied: Flags,
    pub diagnostics: QpDiagnostics,
}

pub const CSV_HEADER: &str =
    "n,m,r,b2,b3,b4,b5,bound_b2,bound_b3,bound_b4,bound_b5,satisfied_b2,satisfied_b3,satisfied_b4,satisfied_b5";

impl BoundReport {
    /// Computes the report from a stochastic view (for `B3..B5` and the rank)
    /// and a joint view (for `B2`) of the same matrix.
    pub fn from_parts(stochastic: &StochasticMatrix, joint: &JointDistribution, opts: &ReportOptions) -> Result<Self> {
        let (n, m) = (stochastic.nrows(), stochastic.ncols());
        if (joint.nrows(), joint.ncols()) != (n, m) {
            return Err(Error::DimensionMismatch("stochastic and joint views differ in shape".into()));
        }
        let rank = numerical_rank(stochastic, opts.rank_tol);
        let qp_opts = QpOptions::with_tol(opts.qp_tol);
        let sel = opts.functionals;
        let mut diagnostics = QpDiagnostics::default();

        let b2v = sel.b2.then(|| b2(joint));
        let b3v = if sel.b3 {
            let (v, sol) = b3_detail(stochastic, &qp_opts)?;
            diagnostics.b3_gap = Some(sol.gap);
            diagnostics.b3_iterations = Some(sol.iterations);
            diagnostics.b3_shift = Some(sol.shift);
            diagnostics.b3_min_form = Some(sol.value);
            Some(v)
        } else {
            None
        };
        let b4v = sel.b4.then(|| b4(stochastic));
        let b5v = if sel.b5 {
            let (v, rows) = b5_detail(stochastic, &qp_opts)?;
            let solved = rows.iter().flatten();
            diagnostics.b5_max_gap = Some(solved.clone().map(|s| s.gap).fold(0.0, f64::max));
            diagnostics.b5_iterations = Some(solved.map(|s| s.iterations).sum());
            Some(v)
        } else {
            None
        };

        let bound_b2 = rank as f64;
        let bound_b3 = bound_b3(rank, m);
        let bound_b4 = rank as f64;
        let bound_b5 = bound_b5(rank, m);
        let satisfied = Flags {
            b2: b2v.map(|v| within_bound(v, bound_b2)),
            b3: b3v.map(|v| within_bound(v, bound_b3)),
            b4: b4v.map(|v| within_bound(v, bound_b4)),
            b5: b5v.map(|v| within_bound(v, bound_b5)),
        };
        Ok(Self {
            n,
            m,
            rank,
            rank_tol: opts.rank_tol,
            b2: b2v,
            b3: b3v,
            b4: b4v,
            b5: b5v,
            bound_b2,
            bound_b3,
            bound_b4,
            bound_b5,
            satisfied,
            diagnostics,
        })
    }

    /// True when every evaluated functional is within its bound.
    pub fn all_satisfied(&self) -> bool {
        let f = self.satisfied;
        [f.b2, f.b3, f.b4, f.b5].iter().all(|x| x.unwrap_or(true))
    }

    /// `(functional / bound)` for each evaluated functional.
    pub fn ratios(&self) -> [Option<f64>; 4] {
        [
            self.b2.map(|v| v / self.bound_b2),
            self.b3.map(|v| v / self.bound_b3),
            self.b4.map(|v| v / self.bound_b4),
            self.b5.map(|v| v / self.bound_b5),
        ]
    }

    /// One CSV row matching [`CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(fmt_sig).unwrap_or_default()
        }
        fn flag(v: Option<bool>) -> String {
            v.map(|b| b.to_string()).unwrap_or_default()
        }
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.m,
            self.rank,
            opt(self.b2),
            opt(self.b3),
            opt(self.b4),
            opt(self.b5),
            fmt_sig(self.bound_b2),
            fmt_sig(self.bound_b3),
            fmt_sig(self.bound_b4),
            fmt_sig(self.bound_b5),
            flag(self.satisfied.b2),
            flag(self.satisfied.b3),
            flag(self.satisfied.b4),
            flag(self.satisfied.b5),
        );
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Report for a stochastic matrix; `B2` uses its global normalization.
pub fn bound_report(m: &StochasticMatrix, opts: &ReportOptions) -> Result<BoundReport> {
    let joint = global_normalize(m)?;
    BoundReport::from_parts(m, &joint, opts)
}

/// Report for a joint distribution; `B3..B5` use its column normalization.
pub fn bound_report_joint(j: &JointDistribution, opts: &ReportOptions) -> Result<BoundReport> {
    let stochastic = column_normalize(j)?;
    BoundReport::from_parts(&stochastic, j, opts)
}
