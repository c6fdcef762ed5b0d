use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    /// Comparison graph of one source splits into several components.
    #[error("comparison graph for source {source_id} is disconnected: {components:?}")]
    Disconnected {
        source_id: String,
        components: Vec<Vec<String>>,
    },

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("assignment {0} has expired")]
    Expired(String),

    #[error("stage `{stage}` failed on {input}: {source}")]
    Stage {
        stage: String,
        input: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }

    pub(crate) fn design(msg: impl Into<String>) -> Self {
        Error::Design(msg.into())
    }
}
