use std::io;

use thiserror::Error;

use crate::routing::RouteTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least {min} points per axis, got {n}")]
    GridTooSmall { n: usize, min: usize },
    #[error("unsupported grid dimension {0} (expected 1 or 2)")]
    BadDimension(usize),
    #[error("grid mismatch: expected {expected}, got {got}")]
    GridMismatch { expected: String, got: String },
    #[error("field has {got} values, grid needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("Helmholtz shift a^2 = {a2} hits Laplacian eigenvalue {eigenvalue}")]
    ResonantShift { a2: f64, eigenvalue: f64 },
    #[error("Poisson right-hand side has mean {mean:e}; it must be zero")]
    IncompatibleRhs { mean: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operator has non-positive diagonal {0}")]
    ZeroDiagonal(f64),
    #[error("grid with n = {0} points per axis cannot be coarsened")]
    OddGrid(usize),
    #[error("operator hierarchy does not match the multigrid configuration: {0}")]
    HierarchyMismatch(String),
    #[error("solver '{0}' is nonlinear; no error-propagation matrix exists")]
    NonlinearSolver(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cost vector is empty")]
    EmptyCosts,
    #[error("solver id {id} is outside 1..={k}")]
    BadId { id: usize, k: usize },
    #[error("HINTS period must be at least 2, got {0}")]
    BadTau(usize),
    #[error("iterate diverged at step {step}")]
    DivergedIterate { step: usize, trace: Box<RouteTrace> },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("ensemble declares a neural solver but no surrogate checkpoint was supplied")]
    MissingSurrogate,
    #[error("mode {mode} is out of range for n = {n}")]
    BadMode { mode: usize, n: usize },
    #[error("exhaustive search over {0} sequences exceeds the limit")]
    SearchTooLarge(u128),
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("sum of squared Lipschitz constants {sum_sq} is not below T = {t}")]
    DegenerateDenominator { sum_sq: f64, t: usize },
    #[error("ensemble is not simultaneously diagonalized by the DFT: {0}")]
    NotSimultaneouslyDiagonalizable(String),
    #[error("file format error: {0}")]
    FormatVersionMismatch(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}
