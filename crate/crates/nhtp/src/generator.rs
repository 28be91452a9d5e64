//! Seeded problem generators: random CP-tensor instances, random symmetric
//! strong M-tensor instances, and the rank-2 analytic fixture with the known
//! solution `e1`.
//!
//! All randomness comes from ChaCha8 streams keyed by `(seed, stream)`, so an
//! identical spec reproduces a bit-identical instance on any platform. Trial
//! batches use the trial index as the stream. Draw order is fixed per
//! generator: operator entries first, then the support permutation, then the
//! solution values, then the start-point noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::ProblemInstance;
use crate::tensor::{
    entry_count, symmetrize, CpTensor, DenseSymmetricTensor, MultilinearOperator,
    DEFAULT_DENSE_CAP,
};

pub const DEFAULT_NOISE_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    CpRandom,
    MTensorRandom,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub order: usize,
    pub dim: usize,
    pub sparsity: usize,
    pub seed: u64,
    /// Scale of the start-point perturbation `x0 = x* + e`.
    pub noise_scale: f64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, order: usize, dim: usize, sparsity: usize, seed: u64) -> Self {
        Self {
            kind,
            order,
            dim,
            sparsity,
            seed,
            noise_scale: DEFAULT_NOISE_SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let min_order = if self.kind == GeneratorKind::Analytic { 3 } else { 2 };
        if self.order < min_order {
            return Err(Error::UnsupportedOrder {
                order: self.order,
                reason: "below the generator's minimum order",
            });
        }
        if self.dim < 2 {
            return Err(Error::InvalidInput("generator needs dim >= 2".into()));
        }
        if self.sparsity < 1 || self.sparsity >= self.dim {
            return Err(Error::SparsityOutOfRange {
                s: self.sparsity,
                bound: self.dim - 1,
            });
        }
        if self.kind == GeneratorKind::Analytic && self.sparsity != 1 {
            return Err(Error::InvalidInput(
                "the analytic fixture has sparsity 1".into(),
            ));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidInput("noise_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

fn nonzero_uniform(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = uniform(rng);
        if v != 0.0 {
            return v;
        }
    }
}

/// Uniformly random size-`s` subset of `0..n` via a partial Fisher-Yates
/// shuffle, returned sorted.
fn random_support(rng: &mut ChaCha8Rng, n: usize, s: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..s {
        let j = rng.random_range(i..n);
        perm.swap(i, j);
    }
    let mut support = perm[..s].to_vec();
    support.sort_unstable();
    support
}

/// Draws `x*` on a random support, computes `b = A (x*)^{m-1}`, and perturbs
/// the start on the same support.
fn finish_instance(
    operator: MultilinearOperator,
    spec: &GeneratorSpec,
    rng: &mut ChaCha8Rng,
) -> Result<ProblemInstance> {
    let n = spec.dim;
    let support = random_support(rng, n, spec.sparsity);
    let mut x_star = vec![0.0; n];
    for &i in &support {
        x_star[i] = nonzero_uniform(rng);
    }
    let b = operator.contract_to_vector(&x_star)?;
    let mut x0 = x_star.clone();
    for &i in &support {
        x0[i] += spec.noise_scale * uniform(rng);
    }
    ProblemInstance::new(operator, b, spec.sparsity)?
        .with_ground_truth(x_star)?
        .with_start(x0)
        .map(|p| p.with_seed(spec.seed))
}

/// Random CP instance: `A = sum_{k=1}^n (u^(k))^m` with factor entries
/// uniform in `[0, 1]`.
pub fn gen_cp_instance(spec: &GeneratorSpec) -> Result<ProblemInstance> {
    gen_cp_with_stream(spec, 0)
}

pub(crate) fn gen_cp_with_stream(spec: &GeneratorSpec, stream: u64) -> Result<ProblemInstance> {
    spec.validate()?;
    if spec.kind != GeneratorKind::CpRandom {
        return Err(Error::InvalidInput("spec kind is not cp-random".into()));
    }
    let mut rng = rng_for(spec.seed, stream);
    let n = spec.dim;
    let factors: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| uniform(&mut rng)).collect())
        .collect();
    let operator = MultilinearOperator::Cp(CpTensor::new(spec.order, n, factors)?);
    finish_instance(operator, spec, &mut rng)
}

/// Random symmetric strong M-tensor instance: `A = n^{m-1} I - B` with `B`
/// the symmetric broadcast of per-multiset uniform `[0, 1]` draws. The shift
/// `n^{m-1}` dominates the spectral radius because every row sum of `B` is
/// at most `n^{m-1}`.
pub fn gen_mtensor_instance(spec: &GeneratorSpec) -> Result<ProblemInstance> {
    gen_mtensor_with_stream(spec, 0)
}

pub(crate) fn gen_mtensor_with_stream(
    spec: &GeneratorSpec,
    stream: u64,
) -> Result<ProblemInstance> {
    spec.validate()?;
    if spec.kind != GeneratorKind::MTensorRandom {
        return Err(Error::InvalidInput("spec kind is not m-tensor-random".into()));
    }
    let (m, n) = (spec.order, spec.dim);
    let count = entry_count(m, n)
        .filter(|&c| c <= DEFAULT_DENSE_CAP as u128)
        .ok_or_else(|| {
            Error::ResourceLimit(format!(
                "m-tensor generator needs {n}^{m} dense entries, cap is {DEFAULT_DENSE_CAP}"
            ))
        })? as usize;

    let mut rng = rng_for(spec.seed, stream);
    let raw: Vec<f64> = (0..count).map(|_| uniform(&mut rng)).collect();
    let b_tensor = symmetrize(&raw, m, n)?;

    let shift = (n as f64).powi(m as i32 - 1);
    let mut values: Vec<f64> = b_tensor.values().iter().map(|v| -v).collect();
    let mut diag_stride = 0usize;
    let mut step = 1usize;
    for _ in 0..m {
        diag_stride += step;
        step *= n;
    }
    for i in 0..n {
        values[i * diag_stride] += shift;
    }
    let operator = MultilinearOperator::Dense(DenseSymmetricTensor::new(m, n, values)?);
    finish_instance(operator, spec, &mut rng)
}

/// The rank-2 analytic fixture: `u1 = ((-1)^m, 1, ..., 1)`,
/// `u2 = ((-1)^{m-1}, 1, ..., 1)`, `A = u1^m + u2^m`,
/// `b = u1 + (-1)^{m-1} u2`, sparsity 1. The solution is `e1`; the start is
/// placed at `1.05 e1`, inside the basin the fixture demonstrates.
pub fn analytic_example(m: usize, n: usize) -> Result<ProblemInstance> {
    if m <= 2 {
        return Err(Error::UnsupportedOrder {
            order: m,
            reason: "the analytic fixture needs m > 2",
        });
    }
    if n < 2 {
        return Err(Error::InvalidInput("the analytic fixture needs n >= 2".into()));
    }
    let sign_m = if m % 2 == 0 { 1.0 } else { -1.0 };
    let mut u1 = vec![1.0; n];
    u1[0] = sign_m;
    let mut u2 = vec![1.0; n];
    u2[0] = -sign_m;
    let b: Vec<f64> = u1
        .iter()
        .zip(&u2)
        .map(|(a, c)| a + (-sign_m) * c)
        .collect();
    let operator = MultilinearOperator::Cp(CpTensor::new(m, n, vec![u1, u2])?);

    let mut x_star = vec![0.0; n];
    x_star[0] = 1.0;
    let mut x0 = vec![0.0; n];
    x0[0] = 1.05;
    ProblemInstance::new(operator, b, 1)?
        .with_ground_truth(x_star)?
        .with_start(x0)
}

/// Generates the instance a spec describes.
pub fn generate(spec: &GeneratorSpec) -> Result<ProblemInstance> {
    generate_with_stream(spec, 0)
}

/// Same, but on a dedicated RNG stream; trial `t` of a batch uses stream
/// `t`. The analytic fixture ignores the stream.
pub fn generate_with_stream(spec: &GeneratorSpec, stream: u64) -> Result<ProblemInstance> {
    match spec.kind {
        GeneratorKind::CpRandom => gen_cp_with_stream(spec, stream),
        GeneratorKind::MTensorRandom => gen_mtensor_with_stream(spec, stream),
        GeneratorKind::Analytic => {
            spec.validate()?;
            analytic_example(spec.order, spec.dim).map(|p| p.with_seed(spec.seed))
        }
    }
}
