//! Diagonal preconditioners for non-convex optimization.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense symmetric eigendecomposition, condition numbers, the
//!   absolute Hessian, row equilibration and the determinant-based condition
//!   bound.
//! - [`model`]: a small sigmoid MLP with exact gradients, forward-over-reverse
//!   Hessian-vector products, exact Hessians and the Gauss-Newton diagonal.
//! - [`precond`]: exact Jacobi / equilibration diagonals and the change of
//!   variables they induce on a Hessian.
//! - [`estimators`]: matrix-free stochastic estimates of the same diagonals
//!   from Hessian-vector products only.
//! - [`optim`]: SGD, equilibrated SGD, Jacobi SGD, RMSProp and AdaGrad behind
//!   one step interface.

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod precond;

pub use error::{Error, Result};
pub use estimators::{CurvatureAccumulator, CurvatureKind, HvpOracle, ProbeDistribution, ProbeSampler};
pub use linalg::{DenseMatrix, EigenDecomposition};
pub use model::{Batch, LossKind, MlpSpec};
pub use optim::{Method, Objective, OptimizerConfig, OptimizerState};
pub use precond::{DiagPreconditioner, PreconditionerKind};
