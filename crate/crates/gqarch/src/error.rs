//! Crate-wide error type.

use crate::inference::Mat5;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("zeta argument s = {s} out of range, need s > 1 + 1e-6")]
    ZetaDomain { s: f64 },

    #[error("empty feasible interval for c at gamma = {gamma}: [{lo}, {hi}]")]
    InfeasibleBox { gamma: f64, lo: f64, hi: f64 },

    #[error("parameters violate the L2 moment condition: B2 = {b2} >= 1 - gamma = {limit}")]
    Infeasible { b2: f64, limit: f64 },

    #[error("nonpositive conditional variance {sigma2} at t = {t}")]
    NonpositiveVariance { t: i64, sigma2: f64 },

    #[error("mode requires a series with a presample block")]
    PresampleMissing,

    #[error("empty likelihood window: {0}")]
    EmptyWindow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("line {line}: cannot parse {text:?} as a number")]
    Parse { line: usize, text: String },

    #[error("series contains no observations")]
    EmptySeries,

    #[error("no feasible starting point inside the box")]
    NoFeasibleStart,

    /// Inversion of the outer-product information matrix failed. The
    /// matrices themselves are still reported so the caller can inspect
    /// which directions collapsed.
    #[error("information matrix singular or ill-conditioned (condition number {condition:.3e})")]
    SingularInfo {
        condition: f64,
        b_hat: Box<Mat5>,
        a_hat: Box<Mat5>,
        kappa4_hat: f64,
        effective_n: usize,
    },

    #[error("autocovariance of squared returns is not positive at lag {lag} (value {value:.3e})")]
    NonpositiveAcf { lag: usize, value: f64 },
}
