//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("axis {axis}: length {length} is not an integer multiple of spacing {h}")]
    NonConformingSpacing { axis: usize, length: f64, h: f64 },

    #[error("dimension {0} unsupported (1-3 only)")]
    DimensionUnsupported(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("SPD factorization failed at pivot {pivot} (value {value})")]
    FactorizationFailed { pivot: usize, value: f64 },

    #[error("sampled diffusion tensor has nonpositive eigenvalue {eigenvalue} at sample {sample}")]
    NonSpdTensor { sample: usize, eigenvalue: f64 },

    #[error("operator action failed on basis column {column}: {reason}")]
    ActionFailure { column: usize, reason: String },

    #[error("iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("matrix is not symmetric (residual {residual:e})")]
    NotSymmetric { residual: f64 },

    #[error("eigensolve failed: {0}")]
    EigensolveFailure(String),

    #[error("increment ratio exceeded 1 for {consecutive} consecutive iterations (last ratio {ratio})")]
    DivergenceDetected { consecutive: usize, ratio: f64 },

    #[error("contraction ratio {0} is not in [0, 1)")]
    InvalidRatio(f64),

    #[error("operator is singular: {0}")]
    SingularOperator(String),

    #[error("contraction condition violated: c_f(r) = {c_f} >= m = {m}")]
    ContractionConditionViolated { c_f: f64, m: f64 },

    #[error("iterate left the ball of radius {radius} at iteration {iteration} (inf-norm {norm})")]
    BallEscape {
        iteration: usize,
        norm: f64,
        radius: f64,
    },

    #[error("trajectory left the ball of radius {radius} at t = {t} (inf-norm {norm})")]
    TrajectoryBallEscape { t: f64, norm: f64, radius: f64 },

    #[error("invalid constants: {0}")]
    InvalidConstants(String),

    #[error("missing constants: {0}")]
    MissingConstants(String),

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("integration window [{t0}, {t1}] exceeds the existence interval (-{delta}, {delta})")]
    WindowExceedsDelta { t0: f64, t1: f64, delta: f64 },

    #[error("time index {index} outside the stored window of {len} nodes")]
    IndexOutOfWindow { index: usize, len: usize },

    #[error("not contractive: c_g * delta = {0} >= 1")]
    NotContractive(f64),

    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("family members are inconsistent: {0}")]
    InconsistentFamily(String),

    #[error("matrix exponential series overflow (scaling budget exhausted, norm {norm:e})")]
    SeriesOverflow { norm: f64 },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
