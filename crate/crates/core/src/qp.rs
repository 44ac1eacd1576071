//! Convex quadratic minimization over the unit simplex and over a weighted
//! slice `{q >= 0, c.q = 1}`, plus exhaustive lattice oracles used to check
//! the solver.
//!
//! The solver is Frank-Wolfe with away steps and exact line search. On the
//! simplex the linear minimization oracle is a coordinate argmin, and the
//! Frank-Wolfe gap `2 (q'Gq - min_k (Gq)_k)` bounds the suboptimality of
//! the current iterate for any PSD `G`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_QP_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Input Gram matrices must be symmetric to this absolute tolerance.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues down to `-PSD_FLOOR` are shifted away; anything lower is rejected.
pub const PSD_FLOOR: f64 = 1e-8;

const REFRESH_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective after every iteration into [`QPSolution::history`].
    pub record_history: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_QP_TOL, max_iter: DEFAULT_MAX_ITER, record_history: false }
    }
}

impl QpOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QPSolution {
    pub q: Vec<f64>,
    /// `q' G q` for the caller's (unshifted) `G`.
    pub value: f64,
    /// Frank-Wolfe duality gap at `q`; the optimum lies in `[value - gap, value]`.
    pub gap: f64,
    pub iterations: usize,
    /// Diagonal shift applied to make `G` numerically PSD (0 if none).
    pub shift: f64,
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// Minimizes `q' G q` over the unit simplex.
pub fn min_quadratic_over_simplex(g: &DMatrix<f64>, tol: f64) -> Result<QPSolution> {
    solve_simplex(g, &QpOptions::with_tol(tol))
}

pub fn solve_simplex(g: &DMatrix<f64>, opts: &QpOptions) -> Result<QPSolution> {
    check_square(g)?;
    check_symmetric(g)?;
    let shift = psd_shift(g, PSD_FLOOR)?;
    let shifted = shifted(g, shift);
    let run = away_step_fw(&shifted, opts)?;
    let value = quad_form(g, &run.q);
    Ok(QPSolution { value, gap: run.gap, iterations: run.iterations, shift, history: run.history, q: run.q })
}

/// Minimizes `q' G q` over `{q >= 0, c.q = 1}`.
///
/// Coordinates with `c_k = 0` are fixed to 0. The remaining problem is mapped
/// onto the simplex by `u_k = c_k q_k`, i.e. it minimizes `u' G' u` with
/// `G'_kl = G_kl / (c_k c_l)`, and the solution is mapped back.
pub fn min_quadratic_over_weighted_slice(g: &DMatrix<f64>, c: &[f64], tol: f64) -> Result<QPSolution> {
    solve_weighted_slice(g, c, &QpOptions::with_tol(tol))
}

pub fn solve_weighted_slice(g: &DMatrix<f64>, c: &[f64], opts: &QpOptions) -> Result<QPSolution> {
    check_square(g)?;
    if c.len() != g.nrows() {
        return Err(Error::LengthMismatch(g.nrows(), c.len()));
    }
    if let Some(bad) = c.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::DimensionMismatch(format!("weight vector has invalid entry {bad}")));
    }
    check_symmetric(g)?;
    let active: Vec<usize> = (0..c.len()).filter(|&k| c[k] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::ZeroObjectiveVector);
    }
    let base_shift = psd_shift(g, PSD_FLOOR)?;
    let k = active.len();
    let reduced = DMatrix::from_fn(k, k, |a, b| {
        let (i, j) = (active[a], active[b]);
        let gij = g[(i, j)] + if i == j { base_shift } else { 0.0 };
        gij / (c[i] * c[j])
    });
    let scale = reduced.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let extra = psd_shift(&reduced, PSD_FLOOR * scale)?;
    let run = away_step_fw(&shifted(&reduced, extra), opts)?;

    let mut q = vec![0.0; c.len()];
    for (a, &i) in active.iter().enumerate() {
        q[i] = run.q[a] / c[i];
    }
    let value = quad_form(g, &q);
    let max_c = active.iter().map(|&i| c[i]).fold(0.0, f64::max);
    Ok(QPSolution {
        q,
        value,
        gap: run.gap,
        iterations: run.iterations,
        shift: base_shift + extra * max_c * max_c,
        history: run.history,
    })
}

pub(crate) fn quad_form(g: &DMatrix<f64>, q: &[f64]) -> f64 {
    let n = q.len();
    let mut total = 0.0;
    for i in 0..n {
        if q[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += g[(i, j)] * q[j];
        }
        total += q[i] * row;
    }
    total
}

fn check_square(g: &DMatrix<f64>) -> Result<()> {
    if g.nrows() != g.ncols() || g.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!("expected nonempty square matrix, got {}x{}", g.nrows(), g.ncols())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn check_symmetric(g: &DMatrix<f64>) -> Result<()> {
    let asym = (g - g.transpose()).amax();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

pub(crate) fn min_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let sym = (g + g.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn psd_shift(g: &DMatrix<f64>, floor: f64) -> Result<f64> {
    let lmin = min_eigenvalue(g);
    if lmin < -floor {
        return Err(Error::NotPositiveSemidefinite(lmin));
    }
    Ok((-lmin).max(0.0))
}

fn shifted(g: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    let mut out = (g + g.transpose()) * 0.5;
    if shift > 0.0 {
        for i in 0..out.nrows() {
            out[(i, i)] += shift;
        }
    }
    out
}

struct FwRun {
    q: Vec<f64>,
    gap: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn mat_vec(g: &DMatrix<f64>, q: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..q.len()).map(|j| g[(i, j)] * q[j]).sum();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Away-step Frank-Wolfe on the unit simplex for `f(q) = q' G q`, `G` PSD.
fn away_step_fw(g: &DMatrix<f64>, opts: &QpOptions) -> Result<FwRun> {
    let m = g.nrows();
    let mut q = vec![1.0 / m as f64; m];
    let mut gq = vec![0.0; m];
    mat_vec(g, &q, &mut gq);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(dot(&q, &gq));
    }

    let mut gap = f64::INFINITY;
    for it in 0..=opts.max_iter {
        if it > 0 && it % REFRESH_EVERY == 0 {
            let total: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= total);
            mat_vec(g, &q, &mut gq);
        }
        let f = dot(&q, &gq);
        let (s, gs) = argmin(&gq, |_| true);
        let (a, ga) = argmax(&gq, |k| q[k] > 0.0);
        gap = 2.0 * (f - gs);
        if gap <= opts.tol {
            return Ok(FwRun { q, gap: gap.max(0.0), iterations: it, history });
        }
        if it == opts.max_iter {
            break;
        }
        let away_gap = 2.0 * (ga - f);
        if gap >= away_gap || q[a] >= 1.0 {
            // toward vertex s: d = e_s - q
            let slope = gs - f;
            let curv = g[(s, s)] - 2.0 * gs + f;
            let step = if curv > 0.0 { (-slope / curv).clamp(0.0, 1.0) } else { 1.0 };
            for k in 0..m {
                gq[k] += step * (g[(k, s)] - gq[k]);
                q[k] *= 1.0 - step;
            }
            q[s] += step;
        } else {
            // away from vertex a: d = q - e_a
            let max_step = q[a] / (1.0 - q[a]);
            let slope = f - ga;
            let curv = f - 2.0 * ga + g[(a, a)];
            let step = if curv > 0.0 { (-slope / curv).clamp(0.0, max_step) } else { max_step };
            for k in 0..m {
                gq[k] += step * (gq[k] - g[(k, a)]);
                q[k] *= 1.0 + step;
            }
            if step >= max_step {
                q[a] = 0.0;
            } else {
                q[a] -= step;
            }
        }
        for v in q.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if opts.record_history {
            history.push(dot(&q, &gq));
        }
    }
    Err(Error::SolverFailure { iterations: opts.max_iter, gap })
}

fn argmin(v: &[f64], keep: impl Fn(usize) -> bool) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (k, &x) in v.iter().enumerate() {
        if keep(k) && x < best.1 {
            best = (k, x);
        }
    }
    best
}

fn argmax(v: &[f64], keep: impl Fn(usize) -> bool) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (k, &x) in v.iter().enumerate() {
        if keep(k) && x > best.1 {
            best = (k, x);
        }
    }
    best
}

/// Largest dimension the lattice oracles accept.
pub const GRID_MAX_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridResult {
    pub value: f64,
    /// Bound on the sup-norm gradient of the objective over the simplex; the
    /// lattice optimum is within roughly `lipschitz * dim / resolution` of the
    /// true optimum.
    pub lipschitz: f64,
    pub points: usize,
}

/// Calls `visit` on every point `k / resolution` of the simplex lattice.
fn for_each_lattice_point(dim: usize, resolution: usize, mut visit: impl FnMut(&[f64])) -> usize {
    let mut counts = vec![0usize; dim];
    let mut q = vec![0.0; dim];
    let mut visited = 0;
    fn rec(pos: usize, left: usize, r: f64, counts: &mut [usize], q: &mut [f64], visit: &mut dyn FnMut(&[f64]), visited: &mut usize) {
        let last = counts.len() - 1;
        if pos == last {
            counts[pos] = left;
            q[pos] = left as f64 / r;
            visit(q);
            *visited += 1;
            return;
        }
        for k in 0..=left {
            counts[pos] = k;
            q[pos] = k as f64 / r;
            rec(pos + 1, left - k, r, counts, q, visit, visited);
        }
    }
    rec(0, resolution, resolution as f64, &mut counts, &mut q, &mut visit, &mut visited);
    visited
}

fn check_grid_args(g: &DMatrix<f64>, resolution: usize) -> Result<usize> {
    check_square(g)?;
    let dim = g.nrows();
    if dim > GRID_MAX_DIM {
        return Err(Error::DimensionTooLarge(dim));
    }
    if resolution == 0 {
        return Err(Error::BadParam("grid resolution must be positive".into()));
    }
    Ok(dim)
}

/// Exhaustive minimum of `q' G q` over the simplex lattice of the given resolution.
pub fn grid_oracle_min(g: &DMatrix<f64>, resolution: usize) -> Result<GridResult> {
    let dim = check_grid_args(g, resolution)?;
    let mut best = f64::INFINITY;
    let points = for_each_lattice_point(dim, resolution, |q| {
        let v = quad_form(g, q);
        if v < best {
            best = v;
        }
    });
    Ok(GridResult { value: best, lipschitz: 2.0 * g.amax(), points })
}

/// Exhaustive maximum of `(c.q) / sqrt(q' G q)` over the simplex lattice.
/// Lattice points with `q' G q <= 0` are skipped.
pub fn grid_oracle_ratio_max(c: &[f64], g: &DMatrix<f64>, resolution: usize) -> Result<GridResult> {
    let dim = check_grid_args(g, resolution)?;
    if c.len() != dim {
        return Err(Error::LengthMismatch(dim, c.len()));
    }
    let mut best = 0.0f64;
    let mut min_form = f64::INFINITY;
    let points = for_each_lattice_point(dim, resolution, |q| {
        let form = quad_form(g, q);
        if form <= 0.0 {
            return;
        }
        min_form = min_form.min(form);
        let ratio = dot(c, q) / form.sqrt();
        if ratio > best {
            best = ratio;
        }
    });
    let cmax = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let gmax = g.amax();
    let lipschitz = if min_form.is_finite() {
        cmax / min_form.sqrt() + cmax * gmax / min_form.powf(1.5)
    } else {
        f64::INFINITY
    };
    Ok(GridResult { value: best, lipschitz, points })
}
