//! Shared test oracles, independent of the library's computation paths:
//! brute-force multi-index contractions, central finite differences, a
//! Jacobi eigenvalue sweep, and seeded problem builders.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nhtp::objective::ProblemInstance;
use nhtp::tensor::{symmetrize, CpTensor, DenseSymmetricTensor, MultilinearOperator};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
}

/// Visits all multi-indices of `order` digits in `0..dim`.
pub fn for_each_index(order: usize, dim: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; order];
    loop {
        visit(&idx);
        let mut pos = order;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < dim {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// `(A x^{m-1})_i` as the full multi-index sum.
pub fn naive_contract_vector(t: &DenseSymmetricTensor, x: &[f64]) -> Vec<f64> {
    let (m, n) = (t.order(), t.dim());
    let mut out = vec![0.0; n];
    for_each_index(m, n, |idx| {
        let prod: f64 = idx[1..].iter().map(|&i| x[i]).product();
        out[idx[0]] += t.entry(idx) * prod;
    });
    out
}

/// `(A x^{m-2})_{ij}` as the full multi-index sum.
pub fn naive_contract_matrix(t: &DenseSymmetricTensor, x: &[f64]) -> DMatrix<f64> {
    let (m, n) = (t.order(), t.dim());
    let mut out = DMatrix::zeros(n, n);
    for_each_index(m, n, |idx| {
        let prod: f64 = idx[2..].iter().map(|&i| x[i]).product();
        out[(idx[0], idx[1])] += t.entry(idx) * prod;
    });
    out
}

/// `sum_k (A x^{m-3})_{ijk} r_k` as the full multi-index sum.
pub fn naive_contract_order3(t: &DenseSymmetricTensor, x: &[f64], r: &[f64]) -> DMatrix<f64> {
    let (m, n) = (t.order(), t.dim());
    let mut out = DMatrix::zeros(n, n);
    for_each_index(m, n, |idx| {
        let prod: f64 = idx[3..].iter().map(|&i| x[i]).product();
        out[(idx[0], idx[1])] += t.entry(idx) * prod * r[idx[2]];
    });
    out
}

/// Central finite differences of the objective.
pub fn fd_gradient(p: &ProblemInstance, x: &[f64], step: f64) -> Vec<f64> {
    let n = x.len();
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        probe[i] = x[i] + step;
        let fp = p.objective_value(&probe).unwrap();
        probe[i] = x[i] - step;
        let fm = p.objective_value(&probe).unwrap();
        probe[i] = x[i];
        g.push((fp - fm) / (2.0 * step));
    }
    g
}

/// Central finite differences of the gradient, one column per coordinate.
pub fn fd_hessian(p: &ProblemInstance, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut probe = x.to_vec();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        probe[i] = x[i] + step;
        let gp = p.gradient(&probe).unwrap();
        probe[i] = x[i] - step;
        let gm = p.gradient(&probe).unwrap();
        probe[i] = x[i];
        for j in 0..n {
            h[(j, i)] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    h
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Used as an
/// eigenvalue routine independent of the linear-algebra backend.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let scale = m.amax().max(1e-300);
    for _ in 0..200 * n * n {
        let mut off = 0.0;
        let (mut p, mut q) = (0, 1);
        for i in 0..n {
            for j in i + 1..n {
                if m[(i, j)].abs() > off {
                    off = m[(i, j)].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
        let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = t * c;
        for k in 0..n {
            let mkp = m[(k, p)];
            let mkq = m[(k, q)];
            m[(k, p)] = c * mkp - s * mkq;
            m[(k, q)] = s * mkp + c * mkq;
        }
        for k in 0..n {
            let mpk = m[(p, k)];
            let mqk = m[(q, k)];
            m[(p, k)] = c * mpk - s * mqk;
            m[(q, k)] = s * mpk + c * mqk;
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

/// Spectral norm of a symmetric matrix.
pub fn symmetric_spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn euclidean_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn seeded_cp_tensor(seed: u64, m: usize, n: usize, r: usize) -> CpTensor {
    let mut rng = rng(seed);
    let factors: Vec<Vec<f64>> = (0..r).map(|_| uniform_vec(&mut rng, n, 0.0, 1.0)).collect();
    CpTensor::new(m, n, factors).unwrap()
}

pub fn seeded_dense_tensor(seed: u64, m: usize, n: usize) -> DenseSymmetricTensor {
    let mut rng = rng(seed);
    let raw = uniform_vec(&mut rng, n.pow(m as u32), 0.0, 1.0);
    symmetrize(&raw, m, n).unwrap()
}

/// A random problem over either representation; `seed` also steers the
/// right-hand side.
pub fn seeded_problem(seed: u64, m: usize, n: usize, s: usize, dense: bool) -> ProblemInstance {
    let mut r = rng(seed ^ 0x9e3779b97f4a7c15);
    let op = if dense {
        MultilinearOperator::Dense(seeded_dense_tensor(seed, m, n))
    } else {
        let rank = 1 + (seed as usize % 4);
        MultilinearOperator::Cp(seeded_cp_tensor(seed, m, n, rank))
    };
    let b = uniform_vec(&mut r, n, -1.0, 1.0);
    ProblemInstance::new(op, b, s).unwrap()
}

/// Least-squares slope of `ln e_{k+1}` against `ln e_k` over the given pairs.
pub fn log_log_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(a, _)| a.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, b)| b.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}
