use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max |M - M^dagger| = {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("state is not normalized (trace or norm = {value:.15})")]
    NotNormalized { value: f64 },

    #[error(
        "state is not positive semidefinite at step {step} (min eigenvalue {min_eigenvalue:.3e})"
    )]
    NotPositive { step: usize, min_eigenvalue: f64 },

    #[error(
        "eigensolver did not converge for {dim}x{dim} matrix \
         (frobenius norm {frobenius_norm:.3e}, hermiticity defect {hermiticity_defect:.3e})"
    )]
    NoConvergence {
        dim: usize,
        frobenius_norm: f64,
        hermiticity_defect: f64,
    },

    #[error("walker reached the lattice edge at step {step} (edge amplitude {amplitude:.3e})")]
    EdgeAmplitude { step: usize, amplitude: f64 },

    #[error("requested step {step} exceeds configured walk length {steps}")]
    StepOutOfRange { step: usize, steps: usize },

    #[error("intermediate map does not exist: kernel is {kernel:.3e} at t = {time}")]
    NonInvertibleMap { time: f64, kernel: f64 },

    #[error("decoherence kernel {value} lies outside [-1, 1]")]
    KernelOutOfRange { value: f64 },

    #[error("noise model `none` has no {what}")]
    NoNoise { what: &'static str },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("monotone fit did not converge within {iterations} iterations")]
    FitFailure { iterations: usize },

    #[error("time series spacing must be uniform with unit step (violated at index {index})")]
    NonUniformSpacing { index: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid time series: {reason} at index {index}")]
    InvalidSeries { index: usize, reason: &'static str },
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
