use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{name} = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("amplitudes are not normalized (squared norm {0})")]
    Unnormalized(f64),
    #[error("unsupported code with n = {0}; expected 3, 5 or 7")]
    UnsupportedCode(usize),
    #[error("{lost} erasures exceed the {max} this code corrects")]
    TooManyErasures { lost: usize, max: usize },
    #[error("unknown configuration {0}")]
    UnknownConfiguration(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("fidelity difference does not change sign on [{lo:e}, {hi:e}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("fidelity difference changes sign {count} times on [{lo:e}, {hi:e}]")]
    MultipleCrossings { lo: f64, hi: f64, count: usize },
    #[error("no threshold: {0}")]
    NoThreshold(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange { name, value })
    }
}
