use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value or argument violates its contract.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("unknown scenario `{0}` (expected `synthetic` or `synthetic2`)")]
    UnknownScenario(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("simulation diverged at time index {time_index}: non-finite level-set value at cell ({i}, {j})")]
    Diverged { time_index: usize, i: usize, j: usize },

    #[error("training diverged at epoch {epoch}: {terms}")]
    TrainingDiverged { epoch: usize, terms: String },

    #[error("interior of the zero-level-set is empty: no accepted draw after {0} attempts")]
    EmptyInterior(usize),

    #[error("variant {variant} requires the {dataset} dataset")]
    MissingDataset {
        variant: &'static str,
        dataset: &'static str,
    },

    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },

    #[error("point ({x}, {y}) at t={t} lies outside the grid")]
    OutOfBounds { t: f64, x: f64, y: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
