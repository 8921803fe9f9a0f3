use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{msg} at line {line}")]
    Parse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate facet {facet} (area {area:e} mm²)")]
    DegenerateFacet { facet: usize, area: f64 },

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("singular reconstruction system: {count} disconnected components ({summary})")]
    SingularSystem { count: usize, summary: String },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("rank-deficient design matrix; columns {columns:?} are linearly dependent")]
    RankDeficient { columns: Vec<u8> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("measurement spec error: {0}")]
    Spec(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("facet {facet}: {source}")]
    AtFacet {
        facet: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("body {body}: {source}")]
    AtBody {
        body: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_facet(self, facet: usize) -> Self {
        Error::AtFacet {
            facet,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_body(self, body: usize) -> Self {
        Error::AtBody {
            body,
            source: Box::new(self),
        }
    }
}
