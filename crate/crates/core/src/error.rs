use thiserror::Error;

/// Errors raised across model construction, matrix equations, and inversion.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SfmError {
    #[error("generator row {row} sums to {sum:e}, beyond tolerance")]
    GeneratorRowSum { row: usize, sum: f64 },
    #[error("generator entry ({row}, {col}) is negative off the diagonal")]
    NegativeOffDiagonal { row: usize, col: usize },
    #[error("rate of phase {phase} ({rate}) disagrees with its partition class")]
    SignPartitionMismatch { phase: usize, rate: f64 },
    #[error("generator is not irreducible")]
    NotIrreducible,
    #[error("parameter derivative {param} of the generator has nonzero row sums")]
    DerivativeRowSum { param: usize },
    #[error("parameter derivative {param} moves the rate of zero-rate phase {phase}")]
    ZeroRateDerivative { param: usize, phase: usize },
    #[error("parameter vector has length {got}, family expects {expected}")]
    ParameterCount { expected: usize, got: usize },
    #[error("phase partition changed at the perturbed parameter point")]
    PartitionChanged,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular linear system")]
    SingularSystem,
    #[error("singular matrix")]
    SingularMatrix,
    #[error("taboo block T00 - sI is singular")]
    SingularTabooBlock,
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("Sylvester operator is singular: spectra of A and -B overlap")]
    SpectraOverlap,
    #[error("Sylvester system of size {0} exceeds the dense solver limit")]
    SylvesterTooLarge(usize),
    #[error("Riccati iteration did not converge in {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("null-recurrent model (drift {drift:e}) at s = 0")]
    NullRecurrent { drift: f64 },
    #[error("model is not positive recurrent (drift {drift:e} >= 0)")]
    UnstableModel { drift: f64 },
    #[error("matrix K(0) is singular")]
    SingularK,
    #[error("constrained system for the xi derivative is inconsistent (residual {0:e})")]
    SingularConstraintSystem(f64),
    #[error("first-passage block system is singular")]
    SingularPassageSystem,
    #[error("repeat factor (I - kernel) is singular")]
    SingularRepeatFactor,
    #[error("inversion error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    InversionAccuracyLoss { estimate: f64, tolerance: f64 },
    #[error("inversion order {order} is outside the valid range for {method}")]
    InvalidOrder { method: &'static str, order: usize },
    #[error("invalid phase-type distribution: {0}")]
    InvalidPhaseType(String),
    #[error("non-positive safety loading (drift {drift:e}); ruin is certain")]
    NegativeLoading { drift: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SfmError>;
