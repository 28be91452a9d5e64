//! The sparse least-squares objective `f(x) = 0.5 |A x^{m-1} - b|^2`, its
//! derivatives, stationarity measures and theory-constant calculators.
//!
//! With `M = A x^{m-2}` and residual `r = A x^{m-1} - b`:
//!
//! * gradient: `(m-1) M r`,
//! * Hessian:  `(m-1)(m-2) W + (m-1)^2 M M` where `W = (A x^{m-3}) r`
//!   (the first term is skipped for `m = 2`, its coefficient vanishes).
//!
//! Stationarity is measured against the hard-thresholding fixed point
//! `x = P_s(x - eta grad f(x))`. Note that for `m >= 3` the origin is an
//! exact stationary point of the measure (the gradient carries a factor
//! `A x^{m-2}`), which is why solvers treat a zero start with nonzero
//! right-hand side as degenerate.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::MultilinearOperator;

/// Absolute tolerance used for "gradient equals zero" tests in the
/// stationarity check.
pub const STATIONARITY_ZERO_TOL: f64 = 1e-10;

/// Guard on the number of support supersets `verify_assumption1` may
/// enumerate.
pub const ASSUMPTION1_ENUM_CAP: u128 = 1_000_000;

/// One instance of the sparse least-squares problem: operator, right-hand
/// side and sparsity budget, optionally with a known solution and a start
/// point. Serializes flat: the tensor schema extended with `b`, `s`,
/// `x_star`, `x0`, `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    #[serde(flatten)]
    operator: MultilinearOperator,
    b: Vec<f64>,
    s: usize,
    #[serde(rename = "x_star", default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Vec<f64>>,
    #[serde(rename = "x0", default, skip_serializing_if = "Option::is_none")]
    start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl ProblemInstance {
    pub fn new(operator: MultilinearOperator, b: Vec<f64>, s: usize) -> Result<Self> {
        let n = operator.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        if s < 1 || s >= n {
            return Err(Error::SparsityOutOfRange { s, bound: n - 1 });
        }
        Ok(Self {
            operator,
            b,
            s,
            ground_truth: None,
            start: None,
            seed: None,
        })
    }

    pub fn with_ground_truth(mut self, x_star: Vec<f64>) -> Result<Self> {
        if x_star.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x_star.len(),
            });
        }
        let nnz = x_star.iter().filter(|v| **v != 0.0).count();
        if nnz > self.s {
            return Err(Error::InvalidInput(format!(
                "ground truth has {nnz} nonzeros, sparsity budget is {}",
                self.s
            )));
        }
        self.ground_truth = Some(x_star);
        Ok(self)
    }

    pub fn with_start(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x0.len(),
            });
        }
        self.start = Some(x0);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn operator(&self) -> &MultilinearOperator {
        &self.operator
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn sparsity(&self) -> usize {
        self.s
    }

    pub fn order(&self) -> usize {
        self.operator.order()
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn ground_truth(&self) -> Option<&[f64]> {
        self.ground_truth.as_deref()
    }

    pub fn start(&self) -> Option<&[f64]> {
        self.start.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Re-checks the structural invariants; used after deserializing
    /// untrusted files.
    pub fn validate(&self) -> Result<()> {
        let probe = Self::new(self.operator.clone(), self.b.clone(), self.s)?;
        let probe = match &self.ground_truth {
            Some(x) => probe.with_ground_truth(x.clone())?,
            None => probe,
        };
        match &self.start {
            Some(x) => drop(probe.with_start(x.clone())?),
            None => drop(probe),
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.operator.contract_to_vector(x)?;
        Ok(ax.iter().zip(&self.b).map(|(a, b)| a - b).collect())
    }

    /// `f(x) = 0.5 |A x^{m-1} - b|^2`.
    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        let r = self.residual(x)?;
        Ok(0.5 * r.iter().map(|v| v * v).sum::<f64>())
    }

    /// `(m-1) A x^{m-2} (A x^{m-1} - b)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.order() as f64;
        let mat = self.operator.contract_to_matrix(x)?;
        let r = &mat * DVector::from_column_slice(x) - DVector::from_column_slice(&self.b);
        let g = (m - 1.0) * (mat * r);
        Ok(g.as_slice().to_vec())
    }

    /// The full Hessian `(m-1)(m-2) W + (m-1)^2 (A x^{m-2})^2`.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.order();
        let mf = m as f64;
        let mat = self.operator.contract_to_matrix(x)?;
        let mut h = (mf - 1.0) * (mf - 1.0) * (&mat * &mat);
        if m > 2 {
            let r = &mat * DVector::from_column_slice(x) - DVector::from_column_slice(&self.b);
            let w = self.operator.contract_order3_with(x, r.as_slice())?;
            h += (mf - 1.0) * (mf - 2.0) * w;
        }
        Ok(h)
    }

    /// The `(rows, cols)` sub-block of the Hessian.
    pub fn hessian_block(&self, x: &[f64], rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        for &i in rows.iter().chain(cols) {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, dim: n });
            }
        }
        let h = self.hessian(x)?;
        Ok(submatrix(&h, rows, cols))
    }

    /// The accuracy measure `Tol_eta(x; T)`: the Euclidean norm of the
    /// stacked vector `[grad_T f(x); x_{T^c}]` plus the worst off-support
    /// excess `max(|grad_i f(x)| - |x|_(s)/eta, 0)`.
    pub fn tolerance_measure(&self, x: &[f64], t: &[usize], eta: f64) -> Result<f64> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: x.len() });
        }
        if t.len() != self.s {
            return Err(Error::InvalidInput(format!(
                "support has {} indices, sparsity is {}",
                t.len(),
                self.s
            )));
        }
        if eta <= 0.0 {
            return Err(Error::InvalidConfig("eta must be positive".into()));
        }
        let g = self.gradient(x)?;
        let on = membership(n, t)?;
        let mut f_sq = 0.0;
        for i in 0..n {
            if on[i] {
                f_sq += g[i] * g[i];
            } else {
                f_sq += x[i] * x[i];
            }
        }
        let threshold = sth_largest_abs(x, self.s) / eta;
        let mut excess: f64 = 0.0;
        for i in 0..n {
            if !on[i] {
                excess = excess.max(g[i].abs() - threshold);
            }
        }
        Ok(f_sq.sqrt() + excess.max(0.0))
    }

    /// Case-wise eta-stationarity test on the full gradient with absolute
    /// tolerance [`STATIONARITY_ZERO_TOL`] for the "= 0" comparisons.
    pub fn eta_stationarity_check(&self, x: &[f64], eta: f64) -> Result<StationarityReport> {
        self.eta_stationarity_check_with_tol(x, eta, STATIONARITY_ZERO_TOL)
    }

    pub fn eta_stationarity_check_with_tol(
        &self,
        x: &[f64],
        eta: f64,
        zero_tol: f64,
    ) -> Result<StationarityReport> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: x.len() });
        }
        if eta <= 0.0 {
            return Err(Error::InvalidConfig("eta must be positive".into()));
        }
        let nnz = x.iter().filter(|v| **v != 0.0).count();
        if nnz > self.s {
            return Err(Error::InvalidInput(format!(
                "point has {nnz} nonzeros, sparsity budget is {}",
                self.s
            )));
        }
        let g = self.gradient(x)?;
        let mut max_support: f64 = 0.0;
        let mut max_off: f64 = 0.0;
        for i in 0..n {
            if x[i] != 0.0 {
                max_support = max_support.max(g[i].abs());
            } else {
                max_off = max_off.max(g[i].abs());
            }
        }
        let threshold = sth_largest_abs(x, self.s) / eta;
        let (case, is_stationary) = if nnz < self.s {
            (
                StationarityCase::StrictSparse,
                max_support <= zero_tol && max_off <= zero_tol,
            )
        } else {
            (
                StationarityCase::FullSparse,
                max_support <= zero_tol && max_off <= threshold + zero_tol,
            )
        };
        Ok(StationarityReport {
            is_stationary,
            case,
            max_support_gradient: max_support,
            max_offsupport_gradient: max_off,
            threshold,
        })
    }
}

/// Outcome of the eta-stationarity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub is_stationary: bool,
    pub case: StationarityCase,
    pub max_support_gradient: f64,
    pub max_offsupport_gradient: f64,
    /// `|x|_(s) / eta`, the bound off-support gradients must respect.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationarityCase {
    /// Fewer than `s` nonzeros.
    StrictSparse,
    /// Exactly `s` nonzeros.
    FullSparse,
}

/// The s-th largest absolute entry of `x` (zero when fewer than `s`
/// entries are nonzero counts naturally).
pub(crate) fn sth_largest_abs(x: &[f64], s: usize) -> f64 {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    if s == 0 || s > mags.len() {
        0.0
    } else {
        mags[s - 1]
    }
}

pub(crate) fn submatrix(h: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| h[(rows[i], cols[j])])
}

fn membership(n: usize, t: &[usize]) -> Result<Vec<bool>> {
    let mut on = vec![false; n];
    for &i in t {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, dim: n });
        }
        on[i] = true;
    }
    Ok(on)
}

fn euclidean(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Local restricted-Hessian Lipschitz constant
/// `L_f = 2(m-1)(m-2)(2m-3)|A|_F^2 (|x_ref| + d0)^{2m-5}
///      +  (m-1)(m-2)(m-3)|b||A|_F^2 (|x_ref| + d0)^{m-4}`.
/// Zero for `m = 2` (constant Hessian).
pub fn lipschitz_constant(p: &ProblemInstance, x_ref: &[f64], delta0: f64) -> f64 {
    let m = p.order();
    if m == 2 {
        return 0.0;
    }
    let mf = m as f64;
    let af2 = p.operator().frobenius_norm().powi(2);
    let base = euclidean(x_ref) + delta0;
    let first = 2.0 * (mf - 1.0) * (mf - 2.0) * (2.0 * mf - 3.0) * af2 * base.powi(2 * m as i32 - 5);
    // the second term's coefficient carries (m-3); skipping it for m = 3
    // avoids 0^(-1) when the base is zero
    let second = if m == 3 {
        0.0
    } else {
        (mf - 1.0) * (mf - 2.0) * (mf - 3.0) * euclidean(p.rhs()) * af2 * base.powi(m as i32 - 4)
    };
    first + second
}

/// Restricted strong-smoothness constant
/// `M_2s = (m-1)(2m-3)|A|_F^2 (|x_ref| + d1)^{2m-4}
///       + (m-1)(m-2)|b||A|_F (|x_ref| + d1)^{m-3}`.
pub fn smoothness_constant(p: &ProblemInstance, x_ref: &[f64], delta1: f64) -> f64 {
    let m = p.order();
    let mf = m as f64;
    let af = p.operator().frobenius_norm();
    let base = euclidean(x_ref) + delta1;
    let first = (mf - 1.0) * (2.0 * mf - 3.0) * af * af * base.powi(2 * m as i32 - 4);
    let second = if m == 2 {
        0.0
    } else {
        (mf - 1.0) * (mf - 2.0) * euclidean(p.rhs()) * af * base.powi(m as i32 - 3)
    };
    first + second
}

/// Result of the brute-force positive-definiteness check over all support
/// supersets of size at most `2s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assumption1Report {
    /// Minimum restricted-Hessian eigenvalue over all enumerated supports.
    pub min_eigenvalue: f64,
    /// The support attaining the minimum.
    pub witness_support: Vec<usize>,
    /// Number of supports enumerated.
    pub supports_checked: u64,
}

impl Assumption1Report {
    /// The assumption holds iff the minimal eigenvalue is positive.
    pub fn holds(&self) -> bool {
        self.min_eigenvalue > 0.0
    }
}

/// Enumerates every `T` with `supp(x_star) <= T` and `|T| <= 2s`, and takes
/// the minimum eigenvalue of the restricted Hessian at `x_star` over all of
/// them. Errors when more than [`ASSUMPTION1_ENUM_CAP`] supports would be
/// visited.
pub fn verify_assumption1(
    p: &ProblemInstance,
    x_star: &[f64],
    s: usize,
) -> Result<Assumption1Report> {
    let n = p.dim();
    if x_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x_star.len() });
    }
    let support: Vec<usize> = (0..n).filter(|&i| x_star[i] != 0.0).collect();
    let k0 = support.len();
    if k0 > s {
        return Err(Error::InvalidInput(format!(
            "reference point has {k0} nonzeros, more than s = {s}"
        )));
    }
    let max_size = (2 * s).min(n);
    let others: Vec<usize> = (0..n).filter(|&i| x_star[i] == 0.0).collect();

    let mut total: u128 = 0;
    for size in k0..=max_size {
        total += binomial(others.len() as u128, (size - k0) as u128);
        if total > ASSUMPTION1_ENUM_CAP {
            return Err(Error::ResourceLimit(format!(
                "assumption-1 enumeration exceeds {ASSUMPTION1_ENUM_CAP} supports"
            )));
        }
    }

    let h = p.hessian(x_star)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut checked = 0u64;
    for size in k0..=max_size {
        for extra in others.iter().copied().combinations(size - k0) {
            let mut t = support.clone();
            t.extend(extra);
            t.sort_unstable();
            let block = submatrix(&h, &t, &t);
            let eigs = block.symmetric_eigenvalues();
            let lambda_min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
            checked += 1;
            match &best {
                Some((cur, _)) if *cur <= lambda_min => {}
                _ => best = Some((lambda_min, t)),
            }
        }
    }
    let (min_eigenvalue, witness_support) = best.expect("at least the base support is enumerated");
    Ok(Assumption1Report {
        min_eigenvalue,
        witness_support,
        supports_checked: checked,
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Step-size parameters from the theory:
/// `alpha_bar = min{(1 - 2 sigma)/(M_2s/gamma - sigma), 1}` and
/// `eta_bar = min{gamma alpha_bar beta / M_2s^2, alpha_bar beta, 1/(4 M_2s)}`.
/// Inputs must satisfy `0 < gamma <= min{1, 2 M_2s}`, `0 < sigma < 1/2`,
/// `0 < beta < 1`.
pub fn recommended_parameters(
    gamma: f64,
    sigma: f64,
    beta: f64,
    m2s: f64,
) -> Result<(f64, f64)> {
    if !(m2s > 0.0) {
        return Err(Error::InvalidConfig("M_2s must be positive".into()));
    }
    if !(gamma > 0.0 && gamma <= 1f64.min(2.0 * m2s)) {
        return Err(Error::InvalidConfig(format!(
            "gamma = {gamma} outside (0, min(1, 2 M_2s) = {}]",
            1f64.min(2.0 * m2s)
        )));
    }
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::InvalidConfig(format!("sigma = {sigma} outside (0, 1/2)")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidConfig(format!("beta = {beta} outside (0, 1)")));
    }
    let alpha_bar = ((1.0 - 2.0 * sigma) / (m2s / gamma - sigma)).min(1.0);
    let eta_bar = (gamma * (alpha_bar * beta) / (m2s * m2s))
        .min(alpha_bar * beta)
        .min(1.0 / (4.0 * m2s));
    Ok((alpha_bar, eta_bar))
}

/// Relative agreement between analytic derivatives and central finite
/// differences, reported by the CLI `verify` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub step: f64,
    /// `max_i |g_fd_i - g_i| / max(1, |g|_inf)`.
    pub gradient_max_rel_error: f64,
    /// Same measure for the full Hessian vs. differenced gradients.
    pub hessian_max_rel_error: f64,
}

pub fn finite_difference_check(
    p: &ProblemInstance,
    x: &[f64],
    step: f64,
) -> Result<DerivativeCheck> {
    let n = p.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x.len() });
    }
    let g = p.gradient(x)?;
    let mut probe = x.to_vec();
    let mut g_err: f64 = 0.0;
    let g_scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..n {
        probe[i] = x[i] + step;
        let fp = p.objective_value(&probe)?;
        probe[i] = x[i] - step;
        let fm = p.objective_value(&probe)?;
        probe[i] = x[i];
        let fd = (fp - fm) / (2.0 * step);
        g_err = g_err.max((fd - g[i]).abs());
    }

    let h = p.hessian(x)?;
    let h_scale = h.amax().max(1.0);
    let mut h_err: f64 = 0.0;
    for i in 0..n {
        probe[i] = x[i] + step;
        let gp = p.gradient(&probe)?;
        probe[i] = x[i] - step;
        let gm = p.gradient(&probe)?;
        probe[i] = x[i];
        for j in 0..n {
            let fd = (gp[j] - gm[j]) / (2.0 * step);
            h_err = h_err.max((fd - h[(j, i)]).abs());
        }
    }
    Ok(DerivativeCheck {
        step,
        gradient_max_rel_error: g_err / g_scale,
        hessian_max_rel_error: h_err / h_scale,
    })
}
