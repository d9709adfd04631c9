//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: state has {state_dim} amplitudes, expected {expected}")]
    DimensionMismatch { state_dim: usize, expected: usize },

    #[error("site index {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("state is not normalized: squared norm = {squared_norm}")]
    Unnormalized { squared_norm: f64 },

    #[error("state space of size {size} exceeds the dense oracle cap {cap}")]
    OracleCapExceeded { size: usize, cap: usize },

    #[error("detailed balance violated for configuration pair ({from}, {to}): residual {residual:.3e}")]
    DetailedBalanceViolation { from: usize, to: usize, residual: f64 },

    #[error("matrix is not Hermitian/symmetric: max deviation {deviation:.3e}")]
    NotHermitian { deviation: f64 },

    #[error("Hermitian form mismatch: similarity transform and jump-operator sum differ by {deviation:.3e}")]
    HermitianFormMismatch { deviation: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("series has not converged: final residual {residual:.3e} exceeds band {band:.3e}")]
    NotConverged { residual: f64, band: f64 },

    #[error("time grids do not overlap")]
    GridMismatch,

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("degenerate: mixed stationary state regime (theta = {theta})")]
    DegenerateTimescales { theta: f64 },

    #[error("no-jump step size underflow at t = {t}: {detail}")]
    StepUnderflow { t: f64, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
