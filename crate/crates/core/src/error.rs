use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("capacity exceeded: {balls} balls do not fit in {urns} urns")]
    Capacity { balls: usize, urns: usize },
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("too large for exact oracle: {0}")]
    TooLarge(String),
    #[error("P(S=m)=0: conditioning event is empty (N={n}, m={m})")]
    EmptyCondition { n: usize, m: i64 },
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("quadrature tolerance not met: estimate {estimate:e}, error {error:e}")]
    Quadrature { estimate: f64, error: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
