use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A named parameter inequality does not hold.
    #[error("constraint {name} violated: {detail}")]
    Constraint { name: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A gamma-norm series diverges for the requested space index.
    #[error("inadmissible configuration: mode sum has power exponent {exponent} (needs < -1)")]
    Inadmissible { exponent: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn constraint(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Constraint {
            name,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Constraint { .. } | Error::Inadmissible { .. } => 2,
            Error::Numerical(_) => 3,
            _ => 1,
        }
    }
}
