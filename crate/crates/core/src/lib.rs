//! Feynman-Kac Monte Carlo and localized finite differences for the
//! Kolmogorov backward equation
//!
//! ```text
//! D_t u + A^t u - c u + f = 0  on [t0, T) x R^d,   u(T, .) = h,
//! A^t u = sum_ij a_ij D^ij u + sum_i b_i D^i u,     a = 1/2 sigma sigma^T,
//! ```
//!
//! with polynomially growing data, together with the numerical checks that
//! turn the bounds known for this problem (growth, maximum principle,
//! smoothing, weighted Schauder estimates) into reproducible tests.
//!
//! The crate is `no_std` with `alloc`. The default `std` feature only adds
//! thread-parallel execution through rayon; all results are bit-identical
//! with and without it.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(a < b)` is used on purpose to reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

extern crate alloc;

pub mod error;
pub mod exec;
pub mod expr;
pub mod fd;
pub mod fk;
pub mod harness;
pub mod math;
pub mod problem;
pub mod rng;
pub mod sde;
pub mod spaces;

pub use error::{DomainError, Error, Result};
pub use exec::Exec;
pub use expr::Expr;
pub use fd::{Field, FieldSource, Grid};
pub use fk::{Estimate, EstimateKind, McParams, Quadrature};
pub use harness::{BoundCheck, GrowthReport};
pub use problem::{CoefficientField, ProblemSpec, Region};
pub use sde::PathBatch;
