use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("feature count mismatch: expected {expected} rows, found {found}")]
    FeatureCount { expected: usize, found: usize },

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    FeatureDimension { expected: usize, found: usize },

    #[error("cannot normalize a zero or non-finite feature vector")]
    DegenerateFeature,

    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(&'static str),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("invalid image: {0}")]
    Image(String),

    #[error("detection {index} in frame {frame} has no feature vector")]
    MissingFeature { frame: u32, index: usize },

    #[error("frame {got} is not after previous frame {previous}")]
    FrameOrder { previous: u32, got: u32 },

    #[error("identity {id} appears more than once in frame {frame}")]
    DuplicateIdentity { frame: u32, id: u32 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
