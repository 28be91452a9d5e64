//! Symmetric tensor representations and contraction primitives.
//!
//! An order-`m`, dimension-`n` symmetric tensor is stored either densely
//! (flat row-major array of length `n^m`) or in CP form as a weighted sum of
//! `m`-th outer powers of factor vectors, `A = sum_k w_k (u^(k))^m`. Both
//! representations answer the same contraction queries:
//!
//! * `contract_to_vector`:   `A x^{m-1}`, an `n`-vector,
//! * `contract_to_matrix`:   `A x^{m-2}`, a symmetric `n x n` matrix,
//! * `contract_order3_with`: `(A x^{m-3})` contracted with a vector `r` in
//!   its last mode, the matrix appearing in the Hessian of the least-squares
//!   objective.
//!
//! The zero-copies convention `A x^0 = A` applies throughout, so the matrix
//! contraction is defined for `m = 2` and the order-3 contraction for
//! `m = 3`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of dense entries (`n^m`) a single tensor may
/// materialize. Roughly 800 MB of f64 at the default.
pub const DEFAULT_DENSE_CAP: usize = 100_000_000;

/// Number of entries `dim^order`, or `None` on overflow.
pub fn entry_count(order: usize, dim: usize) -> Option<u128> {
    (dim as u128).checked_pow(order as u32)
}

fn checked_len(order: usize, dim: usize, cap: usize) -> Result<usize> {
    let count = entry_count(order, dim)
        .ok_or_else(|| Error::ResourceLimit(format!("{dim}^{order} overflows")))?;
    if count > cap as u128 {
        return Err(Error::ResourceLimit(format!(
            "dense storage needs {count} entries, cap is {cap}"
        )));
    }
    Ok(count as usize)
}

fn check_order_dim(order: usize, dim: usize) -> Result<()> {
    if order < 2 {
        return Err(Error::UnsupportedOrder {
            order,
            reason: "tensor order must be at least 2",
        });
    }
    if dim == 0 {
        return Err(Error::InvalidInput("tensor dimension must be positive".into()));
    }
    Ok(())
}

fn check_vector_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Visits every multi-index of `order` digits in `0..dim`, row-major order.
fn for_each_multi_index(order: usize, dim: usize, mut visit: impl FnMut(usize, &[usize])) {
    let mut idx = vec![0usize; order];
    let mut linear = 0usize;
    loop {
        visit(linear, &idx);
        linear += 1;
        // odometer increment on the last digit
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

fn linear_index(dim: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

/// Contracts the last mode of a flat row-major array against `x`.
fn contract_last_mode(values: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    let out_len = values.len() / dim;
    let mut out = vec![0.0; out_len];
    for (j, slot) in out.iter_mut().enumerate() {
        let row = &values[j * dim..(j + 1) * dim];
        *slot = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    out
}

fn matrix_from_row_major(values: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| values[i * n + j])
}

/// Dense symmetric tensor: flat row-major storage of all `n^m` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSymmetricTensor {
    order: usize,
    dim: usize,
    values: Vec<f64>,
}

impl DenseSymmetricTensor {
    /// Wraps a flat value array; the caller asserts symmetry. Fails when the
    /// length is not `dim^order`.
    pub fn new(order: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_order_dim(order, dim)?;
        let len = checked_len(order, dim, DEFAULT_DENSE_CAP)?;
        check_vector_len(len, values.len())?;
        Ok(Self { order, dim, values })
    }

    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        check_order_dim(order, dim)?;
        let len = checked_len(order, dim, DEFAULT_DENSE_CAP)?;
        Ok(Self {
            order,
            dim,
            values: vec![0.0; len],
        })
    }

    /// The identity tensor: diagonal entries 1, all others 0.
    pub fn identity(order: usize, dim: usize) -> Result<Self> {
        let mut t = Self::zeros(order, dim)?;
        for i in 0..dim {
            let idx = vec![i; order];
            let lin = linear_index(dim, &idx);
            t.values[lin] = 1.0;
        }
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn entry(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.order);
        self.values[linear_index(self.dim, idx)]
    }

    /// True when every entry agrees with the entry at its sorted multi-index
    /// up to `tol`. Sorted-representative equality is equivalent to
    /// invariance under all index permutations.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let mut max_dev: f64 = 0.0;
        for_each_multi_index(self.order, self.dim, |linear, idx| {
            let mut sorted = idx.to_vec();
            sorted.sort_unstable();
            let rep = self.values[linear_index(self.dim, &sorted)];
            max_dev = max_dev.max((self.values[linear] - rep).abs());
        });
        max_dev <= tol
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `A x^{m-1}` by contracting the last mode `m-1` times.
    pub fn contract_to_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_vector_len(self.dim, x.len())?;
        let mut cur = self.values.clone();
        for _ in 0..self.order - 1 {
            cur = contract_last_mode(&cur, self.dim, x);
        }
        Ok(cur)
    }

    /// `A x^{m-2}`; for `m = 2` the tensor itself viewed as a matrix.
    pub fn contract_to_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_vector_len(self.dim, x.len())?;
        let mut cur = self.values.clone();
        for _ in 0..self.order - 2 {
            cur = contract_last_mode(&cur, self.dim, x);
        }
        Ok(matrix_from_row_major(&cur, self.dim))
    }

    /// `W` with `W_ij = sum_k (A x^{m-3})_{ijk} r_k`; requires `m >= 3`.
    pub fn contract_order3_with(&self, x: &[f64], r: &[f64]) -> Result<DMatrix<f64>> {
        if self.order < 3 {
            return Err(Error::UnsupportedOrder {
                order: self.order,
                reason: "order-3 contraction needs m >= 3",
            });
        }
        check_vector_len(self.dim, x.len())?;
        check_vector_len(self.dim, r.len())?;
        let mut cur = self.values.clone();
        for _ in 0..self.order - 3 {
            cur = contract_last_mode(&cur, self.dim, x);
        }
        let cur = contract_last_mode(&cur, self.dim, r);
        Ok(matrix_from_row_major(&cur, self.dim))
    }
}

/// Builds a symmetric tensor from a raw array: the entry for each multi-index
/// multiset is read at the sorted index position and broadcast to all
/// permutations. Keeps entries exactly in the sampled range, unlike
/// permutation-averaging.
pub fn symmetrize(raw: &[f64], order: usize, dim: usize) -> Result<DenseSymmetricTensor> {
    check_order_dim(order, dim)?;
    let len = checked_len(order, dim, DEFAULT_DENSE_CAP)?;
    check_vector_len(len, raw.len())?;
    let mut values = vec![0.0; len];
    for_each_multi_index(order, dim, |linear, idx| {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        values[linear] = raw[linear_index(dim, &sorted)];
    });
    DenseSymmetricTensor::new(order, dim, values)
}

/// CP-form tensor `A = sum_k w_k (u^(k))^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpTensor {
    order: usize,
    dim: usize,
    factors: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl CpTensor {
    /// All weights default to 1.
    pub fn new(order: usize, dim: usize, factors: Vec<Vec<f64>>) -> Result<Self> {
        let weights = vec![1.0; factors.len()];
        Self::with_weights(order, dim, factors, weights)
    }

    pub fn with_weights(
        order: usize,
        dim: usize,
        factors: Vec<Vec<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        check_order_dim(order, dim)?;
        if factors.is_empty() {
            return Err(Error::InvalidInput("CP tensor needs at least one factor".into()));
        }
        if factors.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: factors.len(),
                actual: weights.len(),
            });
        }
        for f in &factors {
            check_vector_len(dim, f.len())?;
        }
        Ok(Self {
            order,
            dim,
            factors,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn factor_dots(&self, x: &[f64]) -> Vec<f64> {
        self.factors
            .iter()
            .map(|u| u.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn contract_to_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_vector_len(self.dim, x.len())?;
        let dots = self.factor_dots(x);
        let mut out = vec![0.0; self.dim];
        let p = (self.order - 1) as i32;
        for ((u, &w), &c) in self.factors.iter().zip(&self.weights).zip(&dots) {
            let coeff = w * c.powi(p);
            for (o, &ui) in out.iter_mut().zip(u) {
                *o += coeff * ui;
            }
        }
        Ok(out)
    }

    pub fn contract_to_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_vector_len(self.dim, x.len())?;
        let dots = self.factor_dots(x);
        let mut out = DMatrix::zeros(self.dim, self.dim);
        let p = (self.order - 2) as i32;
        for ((u, &w), &c) in self.factors.iter().zip(&self.weights).zip(&dots) {
            let coeff = w * c.powi(p);
            rank_one_update(&mut out, coeff, u);
        }
        Ok(out)
    }

    pub fn contract_order3_with(&self, x: &[f64], r: &[f64]) -> Result<DMatrix<f64>> {
        if self.order < 3 {
            return Err(Error::UnsupportedOrder {
                order: self.order,
                reason: "order-3 contraction needs m >= 3",
            });
        }
        check_vector_len(self.dim, x.len())?;
        check_vector_len(self.dim, r.len())?;
        let dots = self.factor_dots(x);
        let rdots = self.factor_dots(r);
        let mut out = DMatrix::zeros(self.dim, self.dim);
        let p = (self.order - 3) as i32;
        for (((u, &w), &c), &cr) in self
            .factors
            .iter()
            .zip(&self.weights)
            .zip(&dots)
            .zip(&rdots)
        {
            let coeff = w * c.powi(p) * cr;
            rank_one_update(&mut out, coeff, u);
        }
        Ok(out)
    }

    /// Frobenius norm. Entries are streamed per multi-index while `n^m` is
    /// under `cap`; beyond the cap the Gram identity
    /// `|A|_F^2 = sum_{k,l} w_k w_l <u^(k), u^(l)>^m` is used instead.
    pub fn frobenius_norm_with_cap(&self, cap: usize) -> f64 {
        match entry_count(self.order, self.dim) {
            Some(count) if count <= cap as u128 => {
                let mut sum = 0.0;
                for_each_multi_index(self.order, self.dim, |_, idx| {
                    let v = self.entry(idx);
                    sum += v * v;
                });
                sum.sqrt()
            }
            _ => self.frobenius_norm_gram(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_with_cap(DEFAULT_DENSE_CAP)
    }

    /// Gram-identity route for the Frobenius norm, independent of entry
    /// materialization. O(r^2 n).
    pub fn frobenius_norm_gram(&self) -> f64 {
        let r = self.rank();
        let mut sum = 0.0;
        for k in 0..r {
            for l in 0..r {
                let dot: f64 = self.factors[k]
                    .iter()
                    .zip(&self.factors[l])
                    .map(|(a, b)| a * b)
                    .sum();
                sum += self.weights[k] * self.weights[l] * dot.powi(self.order as i32);
            }
        }
        sum.max(0.0).sqrt()
    }

    /// Entry at a multi-index, evaluated at the sorted index so that every
    /// permutation of the same multiset associates the factor products in
    /// the same order and lands on the bit-identical value.
    pub fn entry(&self, idx: &[usize]) -> f64 {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        self.factors
            .iter()
            .zip(&self.weights)
            .map(|(u, &w)| w * sorted.iter().map(|&i| u[i]).product::<f64>())
            .sum()
    }

    pub fn to_dense(&self) -> Result<DenseSymmetricTensor> {
        self.to_dense_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<DenseSymmetricTensor> {
        let len = checked_len(self.order, self.dim, cap)?;
        let mut values = vec![0.0; len];
        for_each_multi_index(self.order, self.dim, |linear, idx| {
            values[linear] = self.entry(idx);
        });
        DenseSymmetricTensor::new(self.order, self.dim, values)
    }
}

fn rank_one_update(out: &mut DMatrix<f64>, coeff: f64, u: &[f64]) {
    let n = u.len();
    for i in 0..n {
        let ci = coeff * u[i];
        for j in 0..n {
            out[(i, j)] += ci * u[j];
        }
    }
}

/// Uniform access to a symmetric tensor in either representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MultilinearOperator {
    Dense(DenseSymmetricTensor),
    Cp(CpTensor),
}

impl MultilinearOperator {
    pub fn order(&self) -> usize {
        match self {
            Self::Dense(t) => t.order(),
            Self::Cp(t) => t.order(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(t) => t.dim(),
            Self::Cp(t) => t.dim(),
        }
    }

    /// `A x^{m-1}`.
    pub fn contract_to_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Dense(t) => t.contract_to_vector(x),
            Self::Cp(t) => t.contract_to_vector(x),
        }
    }

    /// `A x^{m-2}` as a symmetric matrix.
    pub fn contract_to_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Self::Dense(t) => t.contract_to_matrix(x),
            Self::Cp(t) => t.contract_to_matrix(x),
        }
    }

    /// `(A x^{m-3})` contracted with `r` in the last mode.
    pub fn contract_order3_with(&self, x: &[f64], r: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Self::Dense(t) => t.contract_order3_with(x, r),
            Self::Cp(t) => t.contract_order3_with(x, r),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Self::Dense(t) => t.frobenius_norm(),
            Self::Cp(t) => t.frobenius_norm(),
        }
    }

    pub fn to_dense(&self) -> Result<DenseSymmetricTensor> {
        match self {
            Self::Dense(t) => Ok(t.clone()),
            Self::Cp(t) => t.to_dense(),
        }
    }
}
