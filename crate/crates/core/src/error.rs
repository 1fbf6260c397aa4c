use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex {0} is isolated (zero degree)")]
    IsolatedVertex(usize),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(f64),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("vertex id {id} has no feature row ({n} rows available)")]
    DanglingVertexId { id: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("graph collection is empty")]
    EmptyCollection,

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("evaluation point within kink radius of {op}: input {value:e}")]
    KinkProximity { op: &'static str, value: f64 },

    #[error("matrix is not symmetric")]
    AsymmetricInput,

    #[error("empty vector")]
    EmptyVector,

    #[error("empty assignment matrix")]
    EmptyAssignment,

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class {class} has {count} members, fewer than {folds} folds")]
    ClassTooSmall { class: usize, count: usize, folds: usize },

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
