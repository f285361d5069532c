use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular Bloch matrix A2 for {0}")]
    SingularMatrix(String),

    #[error(
        "quadrature did not converge: estimate {estimate:e}, error {error:e} after {subdivisions} subdivisions ({context})"
    )]
    Quadrature {
        estimate: f64,
        error: f64,
        subdivisions: usize,
        context: String,
    },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("spectrum parse error at line {line}: {message}")]
    SpectrumParse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
