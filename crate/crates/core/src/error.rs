//! Error type shared by every stage of the library.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, lengths or grids disagree.
    #[error("structural input error: {0}")]
    Structural(String),

    #[error("empty region of interest: {0}")]
    EmptyRoi(String),

    /// Ground truth is all-positive or all-negative, so the class ratio is undefined.
    #[error("degenerate class ratio: {0}")]
    DegenerateRatio(String),

    #[error("label {0} not found")]
    UnknownLabel(u32),

    #[error("degenerate texture: {0}")]
    DegenerateTexture(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no valid neighbour: every bank point coincides with the query")]
    NoValidNeighbor,

    #[error("column `{0}` has no observed value and cannot be imputed")]
    UnimputableColumn(String),

    #[error("every feature column was removed by the variance filter")]
    EmptyFeatureSpace,

    #[error("column `{0}` has zero standard deviation")]
    ZeroStd(String),

    #[error("score undefined: {0}")]
    UndefinedScore(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("cohort specification infeasible: {0}")]
    SpecInfeasible(String),

    /// Wraps a failure with the pipeline stage that raised it.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(source),
        }
    }

    /// Process exit code: 3 for numeric failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::UndefinedScore(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
