use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid score in {field}: {value} is outside [0, 1]")]
    InvalidScore { field: String, value: f64 },

    #[error("invalid box in {field}: {reason}")]
    InvalidBox { field: String, reason: String },

    #[error("invalid mask value in {field}: {reason}")]
    InvalidMaskValue { field: String, reason: String },

    #[error("class out of range in {field}: {class_id} >= {num_classes}")]
    ClassOutOfRange {
        field: String,
        class_id: usize,
        num_classes: usize,
    },

    #[error("invalid canvas spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("label {label} at pixel {index} is out of range for {num_classes} classes (ignore = {ignore})")]
    LabelOutOfRange {
        label: u32,
        index: usize,
        num_classes: u16,
        ignore: u16,
    },

    #[error("RLE runs sum to {actual}, expected {expected}")]
    RunSumMismatch { expected: usize, actual: usize },

    #[error("parse error in {source_name} at line {line}, column {column} (byte offset {offset}): {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },

    #[error("validation failed for record {record}: {source}")]
    Validation {
        record: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown class name {name:?} in record {record}")]
    UnknownClassName { name: String, record: usize },

    #[error("unsupported format for {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("no valid (non-ignore) pixels")]
    NoValidPixels,

    #[error("non-finite value {value} at coordinate {coordinate}")]
    NonFiniteValue { coordinate: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing prediction for {0}")]
    MissingPair(String),

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("i/o error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidScore { .. } => "InvalidScore",
            Error::InvalidBox { .. } => "InvalidBox",
            Error::InvalidMaskValue { .. } => "InvalidMaskValue",
            Error::ClassOutOfRange { .. } => "ClassOutOfRange",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::RunSumMismatch { .. } => "RunSumMismatch",
            Error::Parse { .. } => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::UnknownClassName { .. } => "UnknownClassName",
            Error::UnsupportedFormat { .. } => "UnsupportedFormat",
            Error::NoValidPixels => "NoValidPixels",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::MissingPair(_) => "MissingPair",
            Error::Image { .. } => "ImageError",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
