use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input value (non-finite coordinate, bad parameter, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: String,
        expected: String,
        found: String,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("operators {first} and {second} do not commute (commutator max-norm {norm:.3e})")]
    NonCommuting {
        first: usize,
        second: usize,
        norm: f64,
    },

    #[error("basis error: {0}")]
    Basis(String),

    #[error("quadrature grid does not cover {0}")]
    Coverage(String),

    #[error("unknown species label {0}")]
    UnknownSpecies(u32),

    #[error("integrator configuration error: {0}")]
    StepSize(String),

    #[error("evolution aborted at t = {time:.6e}: {reason}")]
    Aborted { time: f64, reason: String },

    #[error("construction error: {0}")]
    Construction(String),

    #[error("problem too large: {count} configurations exceed the bound of {bound}")]
    TooLarge { count: u128, bound: u128 },

    #[error("decay fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
