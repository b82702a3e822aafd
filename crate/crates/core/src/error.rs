use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invariant violation in {record}: {message}")]
    InvariantViolation { record: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("could not place {n_centers} centers at separation >= {floor} after {attempts} attempts")]
    CenterSeparationUnsatisfiable {
        n_centers: usize,
        floor: f64,
        attempts: usize,
    },

    #[error("video {0} has no frames")]
    EmptyVideo(String),

    #[error("non-finite value in row {row}")]
    NonFiniteInput { row: usize },

    #[error("unknown video: {0}")]
    UnknownVideo(String),

    #[error("video {0} has no cluster assignment")]
    UnassignedVideo(String),

    #[error("unknown segment: {0}")]
    UnknownSegment(String),

    #[error("manifest contains no labeled signers")]
    NoLabeledSigners,

    #[error("need at least 3 non-garbage signers, found {0}")]
    TooFewSigners(usize),

    #[error("need at least 3 videos, found {0}")]
    TooFewVideos(usize),

    #[error("manifest is empty")]
    EmptyManifest,

    #[error("no frame of {0} has both shoulders detected")]
    NoValidShoulders(String),

    #[error("degenerate pose in {video_id}: mean shoulder distance {distance:e}")]
    DegeneratePose { video_id: String, distance: f64 },

    #[error("invalid frame rate {0}")]
    FpsInvalid(f64),

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("evaluation set is empty")]
    EmptySet,

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(record: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvariantViolation {
            record: record.into(),
            message: message.into(),
        }
    }

    /// True for failures of the environment rather than of the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::MissingFile(_))
    }
}
