//! Trial runner and metrics: relative error, the 99.9%-mass nonzero count,
//! seeded trial batches, and CSV/JSON result emission.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::generator::{generate_with_stream, GeneratorSpec};
use crate::solver::{default_iht_step, iht_solve, solve, NhtpConfig, SolveStatus};

/// A trial counts as a success when its relative error is at or below this.
pub const SUCCESS_RE_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Nhtp,
    Iht,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Nhtp => write!(f, "nhtp"),
            Self::Iht => write!(f, "iht"),
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nhtp" => Ok(Self::Nhtp),
            "iht" => Ok(Self::Iht),
            other => Err(Error::InvalidInput(format!("unknown solver '{other}'"))),
        }
    }
}

/// The smallest `t` such that the `t` largest magnitudes carry 99.9% of the
/// l1 mass; 0 for the zero vector.
pub fn nnz_measure(x: &[f64]) -> usize {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let l1: f64 = mags.iter().sum();
    if l1 == 0.0 {
        return 0;
    }
    let target = 0.999 * l1;
    let mut acc = 0.0;
    for (i, v) in mags.iter().enumerate() {
        acc += v;
        if acc >= target {
            return i + 1;
        }
    }
    mags.len()
}

/// `|x_hat - x_star| / max(1e-30, |x_star|)`.
pub fn relative_error(x_hat: &[f64], x_star: &[f64]) -> Result<f64> {
    if x_hat.len() != x_star.len() {
        return Err(Error::DimensionMismatch {
            expected: x_star.len(),
            actual: x_hat.len(),
        });
    }
    let diff: f64 = x_hat
        .iter()
        .zip(x_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom: f64 = x_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(diff / denom.max(1e-30))
}

/// One solver run on one generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    /// Trial index; the instance comes from RNG stream `trial` of `seed`.
    pub trial: u64,
    pub solver: SolverKind,
    pub relative_error: f64,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub nnz: usize,
    pub status: SolveStatus,
}

/// Per-solver aggregates over a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solver: SolverKind,
    pub mean_nnz: f64,
    pub mean_re: f64,
    pub mean_time_s: f64,
    pub mean_iter: f64,
    /// Fraction of trials with relative error at most
    /// [`SUCCESS_RE_THRESHOLD`].
    pub success_rate: f64,
}

/// Aggregated batch results for one `(m, n, s)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub order: usize,
    pub dim: usize,
    pub sparsity: usize,
    pub trial_count: usize,
    pub stats: Vec<SolverStats>,
    pub results: Vec<TrialResult>,
}

/// One emitted result line; the CSV schema and the JSON schema coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub solver: SolverKind,
    pub trials: usize,
    pub mean_nnz: f64,
    pub mean_re: f64,
    pub mean_time_s: f64,
    pub mean_iter: f64,
    pub success_rate: f64,
}

impl TrialSummary {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.stats
            .iter()
            .map(|st| SummaryRow {
                m: self.order,
                n: self.dim,
                s: self.sparsity,
                solver: st.solver,
                trials: self.trial_count,
                mean_nnz: st.mean_nnz,
                mean_re: st.mean_re,
                mean_time_s: st.mean_time_s,
                mean_iter: st.mean_iter,
                success_rate: st.success_rate,
            })
            .collect()
    }
}

/// Runs `trials` seeded instances of `spec` through each requested solver.
/// Trial `t` draws its instance from RNG stream `t`; NHTP runs with
/// `config`, the baseline uses its safe default step with the same tolerance
/// and iteration cap. Wall time covers the solve call only.
pub fn run_trials(
    spec: &GeneratorSpec,
    trials: usize,
    solvers: &[SolverKind],
    config: &NhtpConfig,
) -> Result<TrialSummary> {
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    if solvers.is_empty() {
        return Err(Error::InvalidInput("at least one solver is required".into()));
    }
    config.validate()?;
    spec.validate()?;

    let mut results = Vec::with_capacity(trials * solvers.len());
    for t in 0..trials as u64 {
        let instance = generate_with_stream(spec, t)?;
        let x0 = instance
            .start()
            .ok_or_else(|| Error::InvalidInput("generated instance lacks a start point".into()))?
            .to_vec();
        let x_star = instance
            .ground_truth()
            .ok_or_else(|| Error::InvalidInput("generated instance lacks a ground truth".into()))?
            .to_vec();
        for &solver in solvers {
            let report = match solver {
                SolverKind::Nhtp => solve(&instance, &x0, config)?,
                SolverKind::Iht => {
                    let step = default_iht_step(&instance, &x0)?;
                    iht_solve(&instance, &x0, step, config.tol, config.max_iter)?
                }
            };
            results.push(TrialResult {
                seed: spec.seed,
                trial: t,
                solver,
                relative_error: relative_error(&report.x_final, &x_star)?,
                wall_time_s: report.wall_time_s,
                iterations: report.iterations,
                nnz: nnz_measure(&report.x_final),
                status: report.status,
            });
        }
    }

    let stats = solvers
        .iter()
        .map(|&solver| aggregate(solver, &results))
        .collect();
    Ok(TrialSummary {
        order: spec.order,
        dim: spec.dim,
        sparsity: spec.sparsity,
        trial_count: trials,
        stats,
        results,
    })
}

fn aggregate(solver: SolverKind, results: &[TrialResult]) -> SolverStats {
    let mine: Vec<&TrialResult> = results.iter().filter(|r| r.solver == solver).collect();
    let count = mine.len() as f64;
    let mean = |f: &dyn Fn(&TrialResult) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / count;
    SolverStats {
        solver,
        mean_nnz: mean(&|r| r.nnz as f64),
        mean_re: mean(&|r| r.relative_error),
        mean_time_s: mean(&|r| r.wall_time_s),
        mean_iter: mean(&|r| r.iterations as f64),
        success_rate: mine
            .iter()
            .filter(|r| r.relative_error <= SUCCESS_RE_THRESHOLD)
            .count() as f64
            / count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidInput(format!("unknown format '{other}'"))),
        }
    }
}

/// Writes one row per `(grid point, solver)`. CSV carries a header line;
/// JSON is an array of objects with the same fields.
pub fn emit_results(
    summaries: &[TrialSummary],
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<()> {
    let rows: Vec<SummaryRow> = summaries.iter().flat_map(TrialSummary::rows).collect();
    emit_rows(&rows, format, out)
}

pub fn emit_rows(rows: &[SummaryRow], format: OutputFormat, out: &mut dyn Write) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if rows.is_empty() {
                // serde-driven headers need at least one record; write them
                // by hand for the empty case
                w.write_record([
                    "m",
                    "n",
                    "s",
                    "solver",
                    "trials",
                    "mean_nnz",
                    "mean_re",
                    "mean_time_s",
                    "mean_iter",
                    "success_rate",
                ])?;
            }
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_results_file(
    summaries: &[TrialSummary],
    format: OutputFormat,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    emit_results(summaries, format, &mut file)
}
