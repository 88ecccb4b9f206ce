//! Hybrid iterative solvers for periodic Poisson/Helmholtz problems.
//!
//! An iterate is advanced by `u ← u + C_j(f − L u)` where `C_j` is picked at
//! every step from an ensemble of classical preconditioners (weighted Jacobi,
//! Gauss–Seidel, multigrid V-cycles) and learned DeepONet surrogates. The
//! choice is made by a fixed schedule (HINTS), by the omniscient greedy rule
//! that knows the true error, or by an LSTM router trained to imitate it.
//!
//! Module map:
//!
//! - [`pde`]: grids, fields, finite-difference operators, DFT utilities.
//! - [`solvers`]: classical preconditioners and the uniform dispatch.
//! - [`grf`]: Gaussian random field sampling and datasets.
//! - [`neural`]: dense layers, DeepONet, LSTM router, AdamW, checkpoints.
//! - [`routing`]: ensembles, policies, hybrid iteration, routing losses.
//! - [`training`]: surrogate and router training, evaluation.
//! - [`theory`]: numerical checks of the greedy suboptimality results.
//! - [`metrics`]: error/residual AUCs, mode-wise errors, summary statistics.

pub mod error;
pub mod grf;
pub mod metrics;
pub mod neural;
pub mod pde;
pub mod routing;
pub mod solvers;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
pub use pde::{DiscreteOperator, EquationKind, Field, GridSpec};
