use std::path::PathBuf;

/// Everything that can go wrong inside the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_width}x{expected_height}, found {found_width}x{found_height}")]
    DimensionMismatch {
        expected_width: u32,
        expected_height: u32,
        found_width: u32,
        found_height: u32,
    },

    #[error("bounding box coordinate {coordinate}={value} is out of bounds (limit {limit})")]
    BoxOutOfBounds {
        coordinate: &'static str,
        value: i64,
        limit: u32,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown segment id {0}")]
    UnknownSegment(u32),

    #[error("embedding length mismatch: expected {expected}, found {found}")]
    EmbeddingDimension { expected: usize, found: usize },

    #[error("cosine similarity is undefined for a zero-norm embedding")]
    ZeroNorm,

    #[error("the box mask has no foreground pixels")]
    EmptyBoxMask,

    #[error("cannot build embedding bank: {0}")]
    Bank(String),

    #[error("image of {width}x{height} exceeds the exact-evaluation limit of {limit} pixels")]
    ImageTooLarge { width: u32, height: u32, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("feature extractor error: {0}")]
    Extractor(String),

    #[error("i/o failed on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec failed on {path}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("bad JSON in {path}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: mask is not binary (distinct nonzero values: {values:?})")]
    NonBinaryMask { path: PathBuf, values: Vec<u8> },

    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// This error followed by each underlying cause, joined with `": "`.
    pub fn report(&self) -> String {
        let mut out = self.to_string();
        let mut cause = std::error::Error::source(self);
        while let Some(c) = cause {
            out.push_str(": ");
            out.push_str(&c.to_string());
            cause = c.source();
        }
        out
    }
}
