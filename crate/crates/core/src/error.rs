use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear attention normalizer is zero at position {position}")]
    ZeroNormalizer { position: usize },

    #[error("attention row {row} is fully masked")]
    FullyMaskedRow { row: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("gradient tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("image {image_id} needs {tokens} tokens but capacity is {capacity}")]
    ExceedsCapacity {
        image_id: usize,
        tokens: usize,
        capacity: usize,
    },

    #[error("tensor `{0}` not found")]
    MissingTensor(String),

    #[error("checksum mismatch for {file}")]
    ChecksumMismatch { file: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
