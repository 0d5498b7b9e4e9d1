use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Bad user input; `name` is the offending parameter.
    #[error("invalid parameter `{name}`: {reason}")]
    Param { name: String, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("divergent moment: {0}")]
    DivergentMoment(String),
    #[error("non-finite value in {stage} at node {node} (x = {x:e})")]
    NonFinite { stage: String, node: usize, x: f64 },
    #[error("under-resolved: {0}")]
    Underresolved(String),
    #[error("step size underflow at t = {t:e} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("identity audit failed: {0}")]
    Audit(String),
    #[error("tail extraction failed: {0}")]
    Extraction(String),
    #[error("amplitude left the admissible band: {0}")]
    Admissibility(String),
    #[error("fixed point iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("contour evaluation refused near a singularity: {0}")]
    Singular(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Param { name: name.into(), reason: reason.into() }
    }

    /// True for errors caused by the caller's configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Param { .. } | Error::Domain(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
