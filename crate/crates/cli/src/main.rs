//! `psd-bounds`: compute bounding functionals, run rank sweeps, export
//! polytope slack matrices, verify factorization fixtures and reduce rows.
//!
//! Exit codes: 0 success, 1 usage/input error, 2 a checked bound or
//! verification failed.

use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use psd_bounds::elimination::{reduce_with, RowFunctional};
use psd_bounds::factorization::parse_fixtures;
use psd_bounds::functionals::CSV_HEADER;
use psd_bounds::matrix::DEFAULT_RANK_TOL;
use psd_bounds::polytope::{make_polytope, slack_bound_report, slack_matrix, Family};
use psd_bounds::qp::DEFAULT_QP_TOL;
use psd_bounds::{
    bound_report, bound_report_joint, column_normalize, global_normalize, random_rank_r_stochastic, BoundReport,
    FunctionalSet, NonnegMatrix, ReportOptions, StochasticMatrix,
};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "psd-bounds", version, about = "PSD-rank bounding functionals versus ordinary rank")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute B2..B5 and their rank bounds for a CSV matrix.
    Compute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Normalize::Columns)]
        normalize: Normalize,
        /// Comma list of b2,b3,b4,b5 or `all`.
        #[arg(long, default_value = "all")]
        functionals: String,
        #[arg(long, default_value_t = DEFAULT_QP_TOL)]
        qp_tol: f64,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep random rank-r stochastic matrices and check every bound.
    Sweep {
        /// Inclusive range `a..b` (or a single value).
        #[arg(long, default_value = "2..6")]
        n: String,
        #[arg(long, default_value = "2..6")]
        m: String,
        #[arg(long, default_value = "1..3")]
        r: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_QP_TOL)]
        qp_tol: f64,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Slack matrix and bound report for a standard polytope.
    Polytope {
        /// simplex, hypercube, cross_polytope or regular_ngon.
        #[arg(long)]
        family: String,
        /// Dimension, or the number of vertices for regular_ngon.
        #[arg(long)]
        param: usize,
        /// Slack matrix CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report JSON destination; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_QP_TOL)]
        qp_tol: f64,
    },
    /// Verify the factorizations in a JSON fixture file.
    Verify {
        #[arg(long)]
        input: PathBuf,
    },
    /// Eliminate rows with eps-transformations while a functional does not decrease.
    Reduce {
        #[arg(long)]
        input: PathBuf,
        /// b4, mutual_information or mean_statistical_distance.
        #[arg(long)]
        functional: String,
        /// Trace JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Normalize {
    /// Divide each column by its sum.
    Columns,
    /// Divide by the total mass.
    Global,
    /// Require the input to be column-stochastic already.
    None,
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    Violated,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compute { input, normalize, functionals, qp_tol, out } => {
            compute(&input, normalize, &functionals, qp_tol, out.as_deref())
        }
        Command::Sweep { n, m, r, trials, seed, qp_tol, jobs, out } => {
            SweepConfig::new(&n, &m, &r, trials, seed, qp_tol).and_then(|cfg| sweep(&cfg, jobs, out.as_deref()))
        }
        Command::Polytope { family, param, out, report, qp_tol } => {
            polytope(&family, param, qp_tol, out.as_deref(), report.as_deref())
        }
        Command::Verify { input } => verify(&input),
        Command::Reduce { input, functional, out } => reduce(&input, &functional, out.as_deref()),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violated) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn read_matrix(path: &Path) -> anyhow::Result<NonnegMatrix> {
    NonnegMatrix::read_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn compute(input: &Path, normalize: Normalize, functionals: &str, qp_tol: f64, out: Option<&Path>) -> anyhow::Result<Status> {
    let functionals = FunctionalSet::from_str(functionals)?;
    let opts = ReportOptions { qp_tol, rank_tol: DEFAULT_RANK_TOL, functionals };
    let raw = read_matrix(input)?;
    let report = match normalize {
        Normalize::Columns => bound_report(&column_normalize(&raw)?, &opts)?,
        Normalize::Global => bound_report_joint(&global_normalize(&raw)?, &opts)?,
        Normalize::None => bound_report(&StochasticMatrix::new(raw)?, &opts)?,
    };
    let json = report.to_json();
    println!("{json}");
    if let Some(p) = out {
        emit(Some(p), &json)?;
    }
    Ok(if report.all_satisfied() { Status::Ok } else { Status::Violated })
}

fn parse_range(name: &str, s: &str) -> anyhow::Result<RangeInclusive<usize>> {
    let s = s.trim();
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
        None => (s, s),
    };
    let lo: usize = a.parse().with_context(|| format!("--{name}: bad range {s:?}"))?;
    let hi: usize = b.parse().with_context(|| format!("--{name}: bad range {s:?}"))?;
    if lo > hi || lo == 0 {
        bail!("--{name}: range {s:?} is empty or starts at 0");
    }
    Ok(lo..=hi)
}

struct SweepConfig {
    n_range: RangeInclusive<usize>,
    m_range: RangeInclusive<usize>,
    r_range: RangeInclusive<usize>,
    trials: usize,
    seed: u64,
    qp_tol: f64,
}

#[derive(Clone, Copy)]
struct Cell {
    n: usize,
    m: usize,
    r: usize,
    trial: usize,
}

impl SweepConfig {
    fn new(n: &str, m: &str, r: &str, trials: usize, seed: u64, qp_tol: f64) -> anyhow::Result<Self> {
        if trials == 0 {
            bail!("--trials must be at least 1");
        }
        if !(qp_tol > 0.0) {
            bail!("--qp-tol must be positive");
        }
        Ok(Self {
            n_range: parse_range("n", n)?,
            m_range: parse_range("m", m)?,
            r_range: parse_range("r", r)?,
            trials,
            seed,
            qp_tol,
        })
    }

    /// Cells in output order; `r > min(n, m)` is skipped.
    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for n in self.n_range.clone() {
            for m in self.m_range.clone() {
                for r in self.r_range.clone().filter(|&r| r <= n.min(m)) {
                    cells.extend((0..self.trials).map(|trial| Cell { n, m, r, trial }));
                }
            }
        }
        cells
    }
}

/// splitmix64 finalizer, so neighbouring cell indices get unrelated seeds.
fn cell_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sweep(cfg: &SweepConfig, jobs: usize, out: Option<&Path>) -> anyhow::Result<Status> {
    let cells = cfg.cells();
    if cells.is_empty() {
        bail!("no cell has r <= min(n, m)");
    }
    let opts = ReportOptions { qp_tol: cfg.qp_tol, ..ReportOptions::default() };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let reports: Vec<anyhow::Result<BoundReport>> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(idx, c)| {
                let s = random_rank_r_stochastic(c.n, c.m, c.r, cell_seed(cfg.seed, idx as u64))?;
                Ok(bound_report(&s, &opts)?)
            })
            .collect()
    });

    let mut csv = String::from(CSV_HEADER);
    csv.push_str(",trial\n");
    let mut max_ratio = [f64::NEG_INFINITY; 4];
    let mut all_ok = true;
    for (c, rep) in cells.iter().zip(reports) {
        let rep = rep.with_context(|| format!("cell n={} m={} r={} trial={}", c.n, c.m, c.r, c.trial))?;
        for (slot, ratio) in max_ratio.iter_mut().zip(rep.ratios()) {
            if let Some(x) = ratio {
                *slot = slot.max(x);
            }
        }
        all_ok &= rep.all_satisfied();
        csv.push_str(&rep.to_csv_row());
        csv.push_str(&format!(",{}\n", c.trial));
    }
    emit(out, &csv)?;

    let summary: Vec<String> =
        ["b2", "b3", "b4", "b5"].iter().zip(max_ratio).map(|(name, v)| format!("{name}/bound={v:.6}")).collect();
    eprintln!("{} rows; max ratio {}; {}", cells.len(), summary.join(" "), if all_ok { "all bounds hold" } else { "BOUND VIOLATED" });
    Ok(if all_ok { Status::Ok } else { Status::Violated })
}

fn polytope(family: &str, param: usize, qp_tol: f64, out: Option<&Path>, report: Option<&Path>) -> anyhow::Result<Status> {
    let family = Family::from_str(family)?;
    let p = make_polytope(family, param)?;
    let slack = slack_matrix(&p)?;
    let opts = ReportOptions { qp_tol, ..ReportOptions::default() };
    let rep = slack_bound_report(&p, &opts)?;
    emit(out, &slack.base.to_csv_string())?;
    emit(report, &rep.to_json())?;
    Ok(if rep.all_satisfied() { Status::Ok } else { Status::Violated })
}

#[derive(Serialize)]
struct VerifyLine {
    name: String,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    verified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sane: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn verify(input: &Path) -> anyhow::Result<Status> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let fixtures = parse_fixtures(&text).map_err(|e| anyhow!("malformed fixture file: {e}"))?;
    if fixtures.is_empty() {
        bail!("fixture file holds no fixtures");
    }
    let mut all = true;
    for (i, fx) in fixtures.iter().enumerate() {
        let name = if fx.name.is_empty() { format!("#{i}") } else { fx.name.clone() };
        let line = match fx.check() {
            Ok(o) => VerifyLine {
                name,
                passed: o.passed(),
                verified: Some(o.verified),
                residual: Some(o.residual),
                sane: Some(o.sane),
                error: None,
            },
            Err(e) => VerifyLine { name, passed: false, verified: None, residual: None, sane: None, error: Some(e.to_string()) },
        };
        all &= line.passed;
        println!("{}", serde_json::to_string(&line)?);
    }
    Ok(if all { Status::Ok } else { Status::Violated })
}

fn reduce(input: &Path, functional: &str, out: Option<&Path>) -> anyhow::Result<Status> {
    let f = RowFunctional::from_str(functional)?;
    let raw = read_matrix(input)?;
    let normalized: NonnegMatrix =
        if f.wants_joint() { global_normalize(&raw)?.into_inner() } else { column_normalize(&raw)?.into_inner() };
    let trace = reduce_with(&normalized, f)?;
    emit(out, &trace.to_json())?;
    println!("final nonzero rows: {} (rank {}, {} steps)", trace.final_nonzero_rows(), trace.rank, trace.steps.len());
    Ok(if trace.final_nonzero_rows() <= trace.rank.max(1) { Status::Ok } else { Status::Violated })
}
