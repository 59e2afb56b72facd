//! Convex sparse blind deconvolution.
//!
//! Recovers an inverse filter `w` from a blurred observation `y = a ⋆ x` of a
//! sparse Bernoulli-Gaussian sequence `x` by minimizing `‖w ⋆ y‖₁` subject to
//! a single linear normalization `⟨ã, w†⟩ = 1`. Alongside the solver the crate
//! evaluates the closed-form population theory of that program (support
//! expectations, landscape values, phase-transition thresholds, truncated
//! inverse errors, noise-robustness bounds) and ships reproducible experiment
//! harnesses.
//!
//! Modules:
//! - [`filters`]: finite filter algebra, Z-transform roots, truncated inverses.
//! - [`signals`]: Bernoulli-Gaussian sampling, linear processes, noise models.
//! - [`solver`]: the l1 program, an exact one-parameter oracle, recovery test.
//! - [`theory`]: closed forms and Monte Carlo estimators.
//! - [`experiments`]: phase diagram, stability, robustness, sample complexity.
//! - [`cli`]: the `sparse-deconv` command-line surface.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod filters;
pub mod signals;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
pub use filters::{Filter, RootFactorization};
pub use signals::{BgModel, Window};
pub use solver::{SolverConfig, SolverResult};
