//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial belongs to a different basis")]
    BasisMismatch,

    #[error("grade {n} exceeds the basis maximum degree {max}")]
    DegreeOutOfRange { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("generator violates the grading: block ({l},{n}) has norm {norm:e}")]
    GradingViolation { l: usize, n: usize, norm: f64 },

    #[error("generator column for the constant entry is not zero (norm {norm:e})")]
    ConstantColumnNotZero { norm: f64 },

    #[error("generator is not strongly reducing")]
    NotStronglyReducing,

    #[error("Krylov subspace at this vector exceeds {max_dim} dimensions; not locally finite at this p within budget")]
    KrylovBudgetExceeded { max_dim: usize },

    #[error("Krylov construction requires a nonzero start vector")]
    KrylovZeroStart,

    #[error("product table has no entry for ({i}, {j}); the product leaves the modeled space")]
    ProductGap { i: String, j: String },

    #[error("evaluator for a complex-exponential entry cannot produce a real value")]
    ComplexEvaluator,

    #[error("operation requires an exponential-type basis")]
    ExponentialBasisRequired,

    #[error("eigen-action requires h >= 0, got {h}")]
    NegativeEigenTime { h: f64 },

    #[error("time {t} is not on the simulation grid (dt = {dt})")]
    OffGrid { t: f64, dt: f64 },

    #[error("non-finite state produced at path {path}, step {step}")]
    NonFiniteState { path: usize, step: usize },

    #[error("argument {x} is outside the tabulated domain [{lo}, {hi}]")]
    TableDomain { x: f64, lo: f64, hi: f64 },

    #[error("ODE step too coarse: tabulated derivative deviates from the table slope by {err:e}")]
    OdeStepTooCoarse { err: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular linear system in Pade denominator")]
    SingularSystem,

    #[error("model schema error: {0}")]
    Schema(String),

    #[error("model has no SDE block; nothing to simulate")]
    NoSde,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
}
