use thiserror::Error;

/// Everything that can go wrong between reading a formula and reporting a fit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GammError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },

    #[error("invalid model specification: {0}")]
    Semantic(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("column `{column}` has kind {found}, expected {expected}")]
    KindMismatch {
        column: String,
        expected: String,
        found: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("basis construction failed for {term}: {message}")]
    Basis { term: String, message: String },

    #[error("model has {p} coefficients but only {n} rows (largest terms: {})", terms.join(", "))]
    TooManyCoefficients {
        p: usize,
        n: usize,
        terms: Vec<String>,
    },

    #[error("penalized system is rank deficient; unidentifiable direction in term `{0}`")]
    RankDeficient(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl GammError {
    /// Whether the error stems from user input (data, formula, options)
    /// rather than from the numerics.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, GammError::RankDeficient(_) | GammError::Numerical(_))
    }

    pub(crate) fn basis(term: impl Into<String>, message: impl Into<String>) -> Self {
        GammError::Basis {
            term: term.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, GammError>;
