//! Newton hard-thresholding pursuit, plus a plain iterative hard-thresholding
//! baseline.
//!
//! Each NHTP iteration:
//!
//! 1. picks the support `T` of the `s` largest entries of `|x - eta g|`,
//! 2. stops when the stationarity measure `Tol` drops below the tolerance,
//! 3. solves the restricted Newton system
//!    `H_TT d_T = H_{T,T^c} x_{T^c} - g_T`, `d_{T^c} = -x_{T^c}`,
//!    falling back to the restricted gradient direction when the system is
//!    ill-conditioned or the Newton step is not a sufficient descent
//!    direction,
//! 4. backtracks an Armijo step along `d`, zeroing the off-support block at
//!    every trial point.
//!
//! The baseline iterates `x <- P_s(x - step * g)` and stops on small
//! movement; it stands in for an external comparator and is labeled
//! distinctly in benchmark output.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::objective::{submatrix, ProblemInstance};

/// Restricted Newton systems with a worse condition estimate than this fall
/// back to the gradient direction.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Step-size parameter for the support-selection map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    /// `min_i |x0_i on T| / (10 (1 + max_j |grad_j f(x0) off T|))` with
    /// `T = supp(P_s(x0))`, computed once at the start point.
    Auto,
    Fixed(f64),
}

/// Which test switches the curvature floor `gamma_k` to its small value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaSwitch {
    /// `gamma_small` when the whole restricted subvector `x_T` is zero
    /// (default reading).
    SubvectorZero,
    /// `gamma_small` when any entry of `x_T` is zero (alternative reading of
    /// the update rule).
    AnyEntryZero,
}

/// NHTP parameters. Defaults: `sigma = 1e-4/2`, `beta = 0.5`, `gamma`
/// switching between `1e-10` and `1e-4`, stopping at `Tol <= 1e-7`.
#[derive(Debug, Clone)]
pub struct NhtpConfig {
    pub eta: EtaRule,
    pub sigma: f64,
    pub beta: f64,
    pub gamma_small: f64,
    pub gamma_normal: f64,
    pub gamma_switch: GammaSwitch,
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Record every iterate in the report (off by default; used for
    /// convergence-rate studies).
    pub trace_iterates: bool,
}

impl Default for NhtpConfig {
    fn default() -> Self {
        Self {
            eta: EtaRule::Auto,
            sigma: 5e-5,
            beta: 0.5,
            gamma_small: 1e-10,
            gamma_normal: 1e-4,
            gamma_switch: GammaSwitch::SubvectorZero,
            tol: 1e-7,
            max_iter: 2000,
            max_backtracks: 40,
            trace_iterates: false,
        }
    }
}

impl NhtpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "sigma = {} outside (0, 1/2)",
                self.sigma
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidConfig(format!("beta = {} outside (0, 1)", self.beta)));
        }
        if !(self.gamma_small > 0.0 && self.gamma_normal > 0.0) {
            return Err(Error::InvalidConfig("gamma values must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if let EtaRule::Fixed(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidConfig(format!("eta = {eta} must be positive")));
            }
        }
        Ok(())
    }

    fn fixed_eta(&self) -> Result<f64> {
        match self.eta {
            EtaRule::Fixed(v) => Ok(v),
            EtaRule::Auto => Err(Error::InvalidConfig(
                "eta must be resolved to a fixed value here; solve() does this".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    LinesearchFailed,
    DegenerateStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionKind {
    Newton,
    Gradient,
}

/// One completed step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Objective at the iterate the step started from.
    pub objective: f64,
    /// Stationarity measure there (for the baseline: movement of the
    /// previous step).
    pub tol: f64,
    /// Accepted step length.
    pub step: f64,
    pub kind: DirectionKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub x_final: Vec<f64>,
    /// Sorted support of the final iterate.
    pub support: Vec<usize>,
    pub status: SolveStatus,
    /// Number of steps taken.
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub wall_time_s: f64,
    pub final_objective: f64,
    pub final_tol: f64,
    /// The eta actually used (the IHT step size for the baseline).
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vec<f64>>>,
}

/// Keeps the `s` largest-magnitude entries, zeroing the rest; magnitude ties
/// break toward the smaller index.
pub fn hard_threshold(x: &[f64], s: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if s < 1 || s > n {
        return Err(Error::SparsityOutOfRange { s, bound: n });
    }
    let keep = largest_magnitude_indices(x, s);
    let mut out = vec![0.0; n];
    for i in keep {
        out[i] = x[i];
    }
    Ok(out)
}

/// Indices of the `s` largest entries of `|x - eta g|`, sorted ascending.
/// Ties break toward the smaller index.
pub fn select_support(x: &[f64], g: &[f64], eta: f64, s: usize) -> Vec<usize> {
    let u: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - eta * gi).collect();
    let mut t = largest_magnitude_indices(&u, s.min(u.len()));
    t.sort_unstable();
    t
}

fn largest_magnitude_indices(x: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    idx.truncate(s);
    idx
}

fn complement(n: usize, t: &[usize]) -> Vec<usize> {
    let mut on = vec![false; n];
    for &i in t {
        on[i] = true;
    }
    (0..n).filter(|&i| !on[i]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// The curvature floor: `gamma_small` when the restricted subvector `x_T`
/// triggers the configured zero test, `gamma_normal` otherwise.
pub fn gamma_rule(x: &[f64], t: &[usize], config: &NhtpConfig) -> f64 {
    let zero = match config.gamma_switch {
        GammaSwitch::SubvectorZero => t.iter().all(|&i| x[i] == 0.0),
        GammaSwitch::AnyEntryZero => t.iter().any(|&i| x[i] == 0.0),
    };
    if zero {
        config.gamma_small
    } else {
        config.gamma_normal
    }
}

/// The restricted Newton direction:
/// `H_TT d_T = H_{T,T^c} x_{T^c} - g_T`, `d_{T^c} = -x_{T^c}`.
///
/// The `s x s` system is solved through a symmetric spectral factorization.
/// The Newton step is kept only when the factorization is well conditioned
/// (estimate below [`CONDITION_LIMIT`]) and the step passes the descent test
/// `<g, d> <= -gamma_k |d|^2 + |x_{T^c}|^2 / (4 eta)`; otherwise the
/// safeguarded gradient direction `d_T = -g_T`, `d_{T^c} = -x_{T^c}` is
/// returned.
///
/// The curvature floor `gamma_k` is capped at half the smallest restricted
/// eigenvalue: the descent bound is only valid for floors below the local
/// restricted convexity constant, and an uncapped floor rejects exact Newton
/// steps on weakly curved instances, stalling the iteration in a gradient
/// crawl. `config.eta` must be a fixed value.
pub fn newton_direction(
    p: &ProblemInstance,
    x: &[f64],
    t: &[usize],
    config: &NhtpConfig,
) -> Result<(Vec<f64>, DirectionKind)> {
    let n = p.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x.len() });
    }
    if t.len() != p.sparsity() {
        return Err(Error::InvalidInput(format!(
            "support has {} indices, sparsity is {}",
            t.len(),
            p.sparsity()
        )));
    }
    let eta = config.fixed_eta()?;
    let g = p.gradient(x)?;
    let tc = complement(n, t);

    let mut d = vec![0.0; n];
    for &j in &tc {
        d[j] = -x[j];
    }

    let h = p.hessian(x)?;
    let h_tt = submatrix(&h, t, t);
    if let Some((d_t, lambda_min)) = solve_symmetric(&h_tt, &newton_rhs(&h, &g, x, t, &tc)) {
        for (k, &i) in t.iter().enumerate() {
            d[i] = d_t[k];
        }
        let mut gamma = gamma_rule(x, t, config);
        if lambda_min > 0.0 {
            gamma = gamma.min(0.5 * lambda_min);
        }
        let off_sq: f64 = tc.iter().map(|&j| x[j] * x[j]).sum();
        let descent_ok = dot(&g, &d) <= -gamma * norm_sq(&d) + off_sq / (4.0 * eta);
        if descent_ok && d.iter().all(|v| v.is_finite()) {
            return Ok((d, DirectionKind::Newton));
        }
        // reset the on-support block for the fallback
        for &i in t {
            d[i] = 0.0;
        }
    }

    for &i in t {
        d[i] = -g[i];
    }
    Ok((d, DirectionKind::Gradient))
}

fn newton_rhs(h: &DMatrix<f64>, g: &[f64], x: &[f64], t: &[usize], tc: &[usize]) -> DVector<f64> {
    let h_ttc = submatrix(h, t, tc);
    let x_tc = DVector::from_iterator(tc.len(), tc.iter().map(|&j| x[j]));
    let g_t = DVector::from_iterator(t.len(), t.iter().map(|&i| g[i]));
    h_ttc * x_tc - g_t
}

/// Spectral solve of a symmetric system; `None` when the matrix is singular,
/// non-finite, or has condition estimate above [`CONDITION_LIMIT`]. Also
/// returns the smallest (signed) eigenvalue.
fn solve_symmetric(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = a.clone().symmetric_eigen();
    let mut signed_min = f64::INFINITY;
    let mut abs_min = f64::INFINITY;
    let mut abs_max: f64 = 0.0;
    for &l in eig.eigenvalues.iter() {
        signed_min = signed_min.min(l);
        abs_min = abs_min.min(l.abs());
        abs_max = abs_max.max(l.abs());
    }
    if !(abs_min > 0.0) || !abs_max.is_finite() || abs_max / abs_min > CONDITION_LIMIT {
        return None;
    }
    let mut coeffs = eig.eigenvectors.transpose() * rhs;
    for (c, &l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= l;
    }
    Some((&eig.eigenvectors * coeffs, signed_min))
}

/// Armijo backtracking along `d`: the smallest `l` in
/// `{0, ..., max_backtracks}` with
/// `f(x(beta^l)) <= f(x) + sigma beta^l <grad f(x), d>`, where the trial
/// point `x(alpha)` keeps `x_T + alpha d_T` on the support and is zero off
/// it (the off-support block takes its full step at every trial).
pub fn armijo_search(
    p: &ProblemInstance,
    x: &[f64],
    d: &[f64],
    t: &[usize],
    config: &NhtpConfig,
) -> Result<(f64, Vec<f64>)> {
    let n = p.dim();
    if x.len() != n || d.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if x.len() != n { x.len() } else { d.len() },
        });
    }
    let f0 = p.objective_value(x)?;
    let slope = dot(&p.gradient(x)?, d);
    let mut alpha = 1.0;
    for _ in 0..=config.max_backtracks {
        let trial = trial_point(x, d, t, alpha, n);
        let f_trial = p.objective_value(&trial)?;
        if f_trial <= f0 + config.sigma * alpha * slope {
            return Ok((alpha, trial));
        }
        alpha *= config.beta;
    }
    Err(Error::LineSearchExhausted(config.max_backtracks))
}

fn trial_point(x: &[f64], d: &[f64], t: &[usize], alpha: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for &i in t {
        out[i] = x[i] + alpha * d[i];
    }
    out
}

/// The automatic `eta`:
/// `min_{i in T} |x0_i| / (10 (1 + max_{j not in T} |grad_j f(x0)|))` with
/// `T = supp(P_s(x0))`. The minimum is over on-support magnitudes; an empty
/// off-support set contributes 0.
pub fn default_eta(p: &ProblemInstance, x0: &[f64]) -> Result<f64> {
    let n = p.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x0.len() });
    }
    if x0.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateStart);
    }
    let projected = hard_threshold(x0, p.sparsity())?;
    let support: Vec<usize> = (0..n).filter(|&i| projected[i] != 0.0).collect();
    let min_on = support
        .iter()
        .map(|&i| x0[i].abs())
        .fold(f64::INFINITY, f64::min);
    let g = p.gradient(x0)?;
    let on: Vec<bool> = {
        let mut v = vec![false; n];
        for &i in &support {
            v[i] = true;
        }
        v
    };
    let max_off = (0..n)
        .filter(|&j| !on[j])
        .map(|j| g[j].abs())
        .fold(0.0f64, f64::max);
    Ok(min_on / (10.0 * (1.0 + max_off)))
}

/// Runs NHTP from `x0`. The start is projected to `s` entries before the
/// first iteration; a zero start with nonzero right-hand side and order
/// at least 3 is reported as `DegenerateStart` (the origin is a spurious
/// stationary point there).
pub fn solve(p: &ProblemInstance, x0: &[f64], config: &NhtpConfig) -> Result<SolveReport> {
    config.validate()?;
    let n = p.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x0.len() });
    }
    let clock = Instant::now();
    let b_norm_sq = norm_sq(p.rhs());

    if x0.iter().all(|v| *v == 0.0) && b_norm_sq > 0.0 && p.order() >= 3 {
        return Ok(SolveReport {
            x_final: x0.to_vec(),
            support: Vec::new(),
            status: SolveStatus::DegenerateStart,
            iterations: 0,
            history: Vec::new(),
            wall_time_s: clock.elapsed().as_secs_f64(),
            final_objective: 0.5 * b_norm_sq,
            final_tol: 0.0,
            eta: 0.0,
            iterates: None,
        });
    }

    let eta = match config.eta {
        EtaRule::Fixed(v) => v,
        EtaRule::Auto => default_eta(p, x0)?,
    };
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidConfig(format!("resolved eta = {eta} is not positive")));
    }
    let pinned = NhtpConfig {
        eta: EtaRule::Fixed(eta),
        ..config.clone()
    };

    let mut x = hard_threshold(x0, p.sparsity())?;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut iterates = config.trace_iterates.then(|| vec![x.clone()]);
    let mut status = SolveStatus::MaxIters;

    for _ in 0..config.max_iter {
        let g = p.gradient(&x)?;
        let t = select_support(&x, &g, eta, p.sparsity());
        let tol_k = p.tolerance_measure(&x, &t, eta)?;
        if tol_k <= config.tol {
            status = SolveStatus::Converged;
            break;
        }
        let f_k = p.objective_value(&x)?;
        let (d, kind) = newton_direction(p, &x, &t, &pinned)?;
        match armijo_search(p, &x, &d, &t, &pinned) {
            Ok((alpha, x_next)) => {
                history.push(IterationRecord {
                    objective: f_k,
                    tol: tol_k,
                    step: alpha,
                    kind,
                });
                x = x_next;
                if let Some(trace) = iterates.as_mut() {
                    trace.push(x.clone());
                }
            }
            Err(Error::LineSearchExhausted(_)) => {
                status = SolveStatus::LinesearchFailed;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let g = p.gradient(&x)?;
    let t = select_support(&x, &g, eta, p.sparsity());
    let final_tol = p.tolerance_measure(&x, &t, eta)?;
    let final_objective = p.objective_value(&x)?;
    let support: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
    Ok(SolveReport {
        iterations: history.len(),
        x_final: x,
        support,
        status,
        history,
        wall_time_s: clock.elapsed().as_secs_f64(),
        final_objective,
        final_tol,
        eta,
        iterates,
    })
}

/// Safe default step for the IHT baseline:
/// `min(default_eta, 1/(4 M_2s))` with the smoothness constant evaluated at
/// the start point. The automatic eta alone can exceed the stable step range
/// of a plain gradient map on stiff instances.
pub fn default_iht_step(p: &ProblemInstance, x0: &[f64]) -> Result<f64> {
    let eta = default_eta(p, x0)?;
    let m2s = crate::objective::smoothness_constant(p, x0, 0.0);
    Ok(if m2s > 0.0 { eta.min(1.0 / (4.0 * m2s)) } else { eta })
}

/// Iterative hard thresholding: `x <- P_s(x - step * grad f(x))`, stopping
/// when the movement `|x_next - x|` drops to `tol` or on `max_iter`.
pub fn iht_solve(
    p: &ProblemInstance,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!("step = {step} must be positive")));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidConfig("tol must be nonnegative".into()));
    }
    let n = p.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x0.len() });
    }
    let clock = Instant::now();
    let mut x = hard_threshold(x0, p.sparsity())?;
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIters;
    let mut last_move = f64::INFINITY;

    for _ in 0..max_iter {
        let g = p.gradient(&x)?;
        let f_k = p.objective_value(&x)?;
        let u: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
        let x_next = hard_threshold(&u, p.sparsity())?;
        last_move = x_next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        history.push(IterationRecord {
            objective: f_k,
            tol: last_move,
            step,
            kind: DirectionKind::Gradient,
        });
        x = x_next;
        if last_move <= tol {
            status = SolveStatus::Converged;
            break;
        }
    }

    let final_objective = p.objective_value(&x)?;
    let support: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
    Ok(SolveReport {
        iterations: history.len(),
        x_final: x,
        support,
        status,
        history,
        wall_time_s: clock.elapsed().as_secs_f64(),
        final_objective,
        final_tol: last_move,
        eta: step,
        iterates: None,
    })
}
