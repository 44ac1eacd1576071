//! Row elimination by eps-transformations.
//!
//! Given `r + 1` nonzero rows with a linear dependence `sum_i alpha_i row_i = 0`,
//! scaling row `i` by `1 + eps alpha_i` keeps every column sum fixed and keeps
//! the matrix nonnegative for `eps` in `[-1 / max alpha, -1 / min alpha]`.
//! At either endpoint one of the selected rows vanishes.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{b4, mean_statistical_distance, mutual_information};
use crate::matrix::{
    numerical_rank, JointDistribution, NonnegMatrix, StochasticMatrix, DEFAULT_RANK_TOL,
};

/// `alpha` entries at or below this magnitude are set to 0.
pub const ALPHA_SNAP: f64 = 1e-12;
/// Entries of transformed rows at or below this are set to 0.
pub const ROW_SNAP: f64 = 1e-12;
/// Maximum `sigma_min / sigma_max` of a stack still treated as dependent.
pub const DEPENDENCE_TOL: f64 = 1e-7;
/// Residual bound `|sum alpha_i row_i|_inf <= RESIDUAL_TOL * max entry`.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Per-step tolerance for the functional never decreasing.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsTransformPlan {
    pub row_indices: Vec<usize>,
    pub alpha: Vec<f64>,
    pub delta_lo: f64,
    pub delta_hi: f64,
}

impl EpsTransformPlan {
    /// Finds a dependence among `rows` of `m` and its admissible interval.
    pub fn build(m: &NonnegMatrix, rows: &[usize]) -> Result<Self> {
        let alpha = find_dependence(m, rows)?;
        let (delta_lo, delta_hi) = delta_interval(&alpha)?;
        Ok(Self { row_indices: rows.to_vec(), alpha, delta_lo, delta_hi })
    }

    pub fn contains(&self, eps: f64) -> bool {
        let slack = 1e-12 * self.delta_lo.abs().max(self.delta_hi.abs()).max(1.0);
        eps >= self.delta_lo - slack && eps <= self.delta_hi + slack
    }
}

fn validate_rows(m: &NonnegMatrix, rows: &[usize]) -> Result<()> {
    if rows.len() < 2 {
        return Err(Error::InvalidRowSelection(format!("need at least 2 rows, got {}", rows.len())));
    }
    for (k, &i) in rows.iter().enumerate() {
        if i >= m.nrows() {
            return Err(Error::InvalidRowSelection(format!("row {i} out of range")));
        }
        if rows[..k].contains(&i) {
            return Err(Error::InvalidRowSelection(format!("row {i} selected twice")));
        }
        if m.is_zero_row(i) {
            return Err(Error::InvalidRowSelection(format!("row {i} is zero")));
        }
    }
    Ok(())
}

/// Unit-norm `alpha` with `sum_i alpha_i m[rows[i]] = 0`, taken as the
/// singular vector of the smallest singular value of the stacked rows.
///
/// `rows` should hold `rank(m) + 1` distinct nonzero rows; a stack that is
/// numerically independent yields [`Error::NoDependence`].
pub fn find_dependence(m: &NonnegMatrix, rows: &[usize]) -> Result<Vec<f64>> {
    validate_rows(m, rows)?;
    let k = rows.len();
    let cols = m.ncols();
    // transpose of the stack, zero-padded to at least k rows so the SVD
    // returns a full k x k right factor
    let height = cols.max(k);
    let stack_t = DMatrix::from_fn(height, k, |j, i| if j < cols { m.get(rows[i], j) } else { 0.0 });
    let svd = stack_t.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let (imin, smin) = sv.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio > DEPENDENCE_TOL {
        return Err(Error::NoDependence { ratio });
    }

    let mut alpha: Vec<f64> = v_t.row(imin).iter().copied().collect();
    for a in alpha.iter_mut() {
        if a.abs() <= ALPHA_SNAP {
            *a = 0.0;
        }
    }
    let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    alpha.iter_mut().for_each(|a| *a /= norm);
    // sign convention: the entry of largest magnitude is positive
    let lead = alpha.iter().copied().fold(0.0f64, |acc, a| if a.abs() > acc.abs() { a } else { acc });
    if lead < 0.0 {
        alpha.iter_mut().for_each(|a| *a = -*a);
    }

    if !alpha.iter().any(|&a| a > 0.0) || !alpha.iter().any(|&a| a < 0.0) {
        return Err(Error::SignDegeneracy);
    }
    let residual = (0..cols)
        .map(|j| rows.iter().zip(&alpha).map(|(&i, a)| a * m.get(i, j)).sum::<f64>().abs())
        .fold(0.0, f64::max);
    if residual > RESIDUAL_TOL * m.max_entry() {
        return Err(Error::NoDependence { ratio });
    }
    Ok(alpha)
}

/// `[-1 / max alpha, -1 / min alpha]`.
pub fn delta_interval(alpha: &[f64]) -> Result<(f64, f64)> {
    let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min < 0.0) {
        return Err(Error::SignDegeneracy);
    }
    Ok((-1.0 / max, -1.0 / min))
}

/// Scales the selected rows by `1 + eps alpha_i`; other rows are copied.
/// Coefficients and entries within `1e-12` of zero are snapped to 0, so an
/// endpoint `eps` zeroes at least one selected row exactly.
pub fn eps_transform(m: &NonnegMatrix, plan: &EpsTransformPlan, eps: f64) -> Result<NonnegMatrix> {
    if !plan.contains(eps) {
        return Err(Error::EpsOutOfInterval { eps, lo: plan.delta_lo, hi: plan.delta_hi });
    }
    if plan.row_indices.len() != plan.alpha.len() {
        return Err(Error::DimensionMismatch("plan rows and alpha differ in length".into()));
    }
    let mut data = m.as_matrix().clone();
    for (&i, &a) in plan.row_indices.iter().zip(&plan.alpha) {
        if i >= m.nrows() {
            return Err(Error::InvalidRowSelection(format!("row {i} out of range")));
        }
        let mut coef = 1.0 + eps * a;
        if coef <= ALPHA_SNAP {
            coef = 0.0;
        }
        for j in 0..m.ncols() {
            let v = data[(i, j)] * coef;
            data[(i, j)] = if v <= ROW_SNAP { 0.0 } else { v };
        }
    }
    NonnegMatrix::new(data)
}

/// Applies [`eps_transform`] to a stochastic matrix, keeping it stochastic.
pub fn eps_transform_stochastic(m: &StochasticMatrix, plan: &EpsTransformPlan, eps: f64) -> Result<StochasticMatrix> {
    StochasticMatrix::new(eps_transform(m, plan, eps)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionStep {
    pub plan: EpsTransformPlan,
    pub chosen_eps: f64,
    pub functional_before: f64,
    pub functional_after: f64,
    pub nonzero_rows_before: usize,
    pub nonzero_rows_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionTrace {
    pub rank: usize,
    pub steps: Vec<ReductionStep>,
    pub final_matrix: NonnegMatrix,
}

impl ReductionTrace {
    pub fn final_nonzero_rows(&self) -> usize {
        self.final_matrix.nonzero_rows().len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Eliminates rows until at most `rank(m)` are nonzero, each step moving to
/// whichever endpoint of the interval gives the larger `phi` (ties go to the
/// upper endpoint).
pub fn reduce_rows<F>(m: &NonnegMatrix, phi: F) -> Result<ReductionTrace>
where
    F: Fn(&NonnegMatrix) -> Result<f64>,
{
    let rank = numerical_rank(m, DEFAULT_RANK_TOL);
    let mut current = m.clone();
    let mut steps = Vec::new();
    let mut value = phi(&current)?;
    loop {
        let nonzero = current.nonzero_rows();
        if nonzero.len() <= rank {
            break;
        }
        let step_err = |e: Error| Error::ReductionStep { step: steps.len(), source: Box::new(e) };
        let plan = EpsTransformPlan::build(&current, &nonzero[..rank + 1]).map_err(step_err)?;
        let lo = eps_transform(&current, &plan, plan.delta_lo).map_err(step_err)?;
        let hi = eps_transform(&current, &plan, plan.delta_hi).map_err(step_err)?;
        let phi_lo = phi(&lo).map_err(step_err)?;
        let phi_hi = phi(&hi).map_err(step_err)?;
        let (next, eps, next_value) =
            if phi_hi >= phi_lo { (hi, plan.delta_hi, phi_hi) } else { (lo, plan.delta_lo, phi_lo) };
        let after_rows = next.nonzero_rows().len();
        debug_assert!(after_rows < nonzero.len());
        steps.push(ReductionStep {
            plan,
            chosen_eps: eps,
            functional_before: value,
            functional_after: next_value,
            nonzero_rows_before: nonzero.len(),
            nonzero_rows_after: after_rows,
        });
        current = next;
        value = next_value;
    }
    Ok(ReductionTrace { rank, steps, final_matrix: current })
}

/// Functionals usable with [`reduce_rows`]: each is affine in `eps` along an
/// eps-transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFunctional {
    /// `B4`, on stochastic input.
    B4,
    /// Mutual information, on joint-distribution input.
    MutualInformation,
    /// `S(M)`, on stochastic input.
    MeanStatisticalDistance,
}

impl RowFunctional {
    pub fn evaluate(self, m: &NonnegMatrix) -> Result<f64> {
        match self {
            RowFunctional::B4 => Ok(b4(&StochasticMatrix::new(m.clone())?)),
            RowFunctional::MutualInformation => Ok(mutual_information(&JointDistribution::new(m.clone())?)),
            RowFunctional::MeanStatisticalDistance => {
                Ok(mean_statistical_distance(&StochasticMatrix::new(m.clone())?))
            }
        }
    }

    /// Whether the functional expects a joint distribution rather than a
    /// stochastic matrix.
    pub fn wants_joint(self) -> bool {
        matches!(self, RowFunctional::MutualInformation)
    }

    pub fn name(self) -> &'static str {
        match self {
            RowFunctional::B4 => "b4",
            RowFunctional::MutualInformation => "mutual_information",
            RowFunctional::MeanStatisticalDistance => "mean_statistical_distance",
        }
    }
}

impl std::str::FromStr for RowFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "b4" => Ok(RowFunctional::B4),
            "mutual_information" | "mi" | "b2" => Ok(RowFunctional::MutualInformation),
            "mean_statistical_distance" | "s" => Ok(RowFunctional::MeanStatisticalDistance),
            other => Err(Error::BadParam(format!(
                "functional {other:?} cannot drive row elimination (expected b4, mutual_information or mean_statistical_distance)"
            ))),
        }
    }
}

/// [`reduce_rows`] with one of the built-in functionals.
pub fn reduce_with(m: &NonnegMatrix, functional: RowFunctional) -> Result<ReductionTrace> {
    reduce_rows(m, |x| functional.evaluate(x))
}
