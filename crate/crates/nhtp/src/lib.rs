//! Sparse least-squares solutions of symmetric multilinear equations.
//!
//! Finds `s`-sparse minimizers of `f(x) = 0.5 |A x^{m-1} - b|^2` for a
//! symmetric order-`m` tensor `A`, using Newton hard-thresholding pursuit:
//! support selection through the hard-thresholding map, a restricted Newton
//! step on the selected support, and Armijo backtracking. A plain iterative
//! hard-thresholding solver serves as the baseline comparator.
//!
//! Modules:
//!
//! * [`tensor`] — dense and CP symmetric tensor storage and the contraction
//!   primitives `A x^{m-1}`, `A x^{m-2}`, `(A x^{m-3}) r`.
//! * [`objective`] — the least-squares objective, gradient/Hessian,
//!   stationarity measures and theory-constant calculators.
//! * [`solver`] — the NHTP iteration and the IHT baseline.
//! * [`generator`] — seeded random CP / M-tensor instance generators and the
//!   rank-2 analytic fixture.
//! * [`bench`](mod@bench) — trial batches, metrics and CSV/JSON emission.

pub mod bench;
pub mod error;
pub mod generator;
pub mod objective;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use objective::ProblemInstance;
pub use solver::{NhtpConfig, SolveReport, SolveStatus};
pub use tensor::MultilinearOperator;
