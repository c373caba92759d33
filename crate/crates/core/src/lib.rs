//! Simulation and estimation toolkit for stationary measures of
//! contracting-on-average random Lipschitz systems on ℝ^d.
//!
//! The pipeline: build a weighted collection of Lipschitz maps
//! ([`measure::GeneratingMeasure`]), draw points of its stationary measure by
//! backward iteration ([`sampler`]), then measure the polynomial decay of the
//! tail and cross-check against analytic quantities (contraction rate,
//! Lyapunov exponent, Cramér rate function, the lower-bound exponent of the
//! expanding atom, annulus entropy bounds).

// Guards written as `!(x > 0.0)` are deliberate: they must also reject NaN,
// which the suggested `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod entropy;
pub mod maps;
pub mod measure;
pub mod presets;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod stats;
pub mod tails;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("eigen/singular-value iteration did not converge")]
    SvdFailed,
    #[error("I - A is numerically singular (condition number above {0:e})")]
    SingularSystem(f64),
    #[error("piecewise composition exceeded the knot cap of {0}")]
    KnotOverflow(usize),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("atom {0} has zero Lipschitz constant")]
    ZeroLipschitz(usize),
    #[error("operation requires finite support; measure is countably supported")]
    CountableSupport,
    #[error("generating measure is not contracting on average (chi = {0})")]
    NonContracting(f64),
    #[error("no expanding atom (all Lipschitz constants <= 1)")]
    NoExpandingAtom,
    #[error("insufficient tail data: {usable} usable radii, need at least {needed}")]
    InsufficientTailData { usable: usize, needed: usize },
    #[error("insufficient nonzero deviation frequencies for a rate fit")]
    InsufficientLdpData,
    #[error("work budget exceeded: {0} draws requested")]
    WorkBudget(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
