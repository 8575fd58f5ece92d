use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unbalanced panel: no observation for unit `{unit}` at time `{time}`")]
    UnbalancedPanel { unit: String, time: String },

    #[error("parse error in data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate observation for unit `{unit}` at time `{time}`")]
    DuplicateKey { unit: String, time: String },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("covariate {covariate} has zero range across units; cannot build a basis")]
    DegenerateCovariate { covariate: usize },

    #[error("invalid basis specification: {0}")]
    InvalidBasis(String),

    #[error("singular design; near-null direction {direction:?}")]
    SingularDesign { direction: Vec<f64> },

    #[error("invalid number of factors {k}: must satisfy 1 <= k < {limit}")]
    InvalidFactorCount { k: usize, limit: usize },

    #[error("iterative estimator did not converge")]
    NotConverged,

    #[error("{failed} of {attempted} bootstrap draws had a singular design")]
    TooManySingularDraws { failed: usize, attempted: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    InFile { path: String, source: Box<Error> },
}

impl Error {
    /// True for failures caused by malformed input or configuration rather
    /// than by the numerics.
    pub fn is_input_error(&self) -> bool {
        if let Error::InFile { source, .. } = self {
            return source.is_input_error();
        }
        matches!(
            self,
            Error::UnbalancedPanel { .. }
                | Error::Parse { .. }
                | Error::DuplicateKey { .. }
                | Error::InvalidPanel(_)
                | Error::InvalidBasis(_)
                | Error::InvalidFactorCount { .. }
                | Error::InvalidConfig(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

/// Attach a file path to errors raised while handling that file.
pub fn in_file<T>(path: &std::path::Path, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::InFile {
        path: path.display().to_string(),
        source: Box::new(e),
    })
}

/// Non-fatal conditions attached to results.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Warning {
    /// Fewer units than basis columns in a block; Φ cannot have full column rank.
    RankDeficientBasis { n_units: usize, columns: usize },
    /// Eigenvalues at the K/K+1 boundary are numerically tied.
    AmbiguousFactorSpace { k: usize },
    /// A zero eigenvalue was hit inside the factor-count search range.
    DegenerateEigenvalues { at: usize },
    /// Fewer units than basis columns overall (N <= J·Q).
    FewUnits { n_units: usize, columns: usize },
}
