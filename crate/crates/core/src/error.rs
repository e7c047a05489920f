use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("weight has no sign change on [0, T]")]
    NoSignChange,
    #[error("weight has no negative part (integral of a- is zero)")]
    DefiniteWeight,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("solution blew up after t = {time}")]
    BlowUp { time: f64 },
    #[error("step size underflow at t = {time} (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },
    #[error("singular Newton matrix: |det(M - I)| = {det:e}")]
    SingularJacobian { det: f64 },
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("hump {hump}: maximum {max:e} lies in the ambiguous band around r = {r:e}")]
    AmbiguousClassification { hump: usize, max: f64, r: f64 },
    #[error("hump {hump}: maximum {max:e} exceeds R = {big_r:e}")]
    ExceedsR { hump: usize, max: f64, big_r: f64 },
    #[error("difference is identically zero (max |d| = {max_abs:e})")]
    DegenerateDifference { max_abs: f64 },
    #[error("phase-plane curve passes through the origin near t = {time}")]
    OriginHit { time: f64 },
    #[error("no bracket found: {0}")]
    BracketFailure(String),
    #[error("integration failed: {0}")]
    IntegrationFailure(String),
    #[error("enumeration of {n}^{k} words is too large")]
    TooLarge { n: u32, k: u32 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that come from the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::BadParams(_)
                | Error::Config(_)
                | Error::NoSignChange
                | Error::DefiniteWeight
                | Error::TooLarge { .. }
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
