use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("component registry mismatch: {0}")]
    Registry(String),

    #[error("invalid windowing: {0}")]
    Windowing(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("segment {segment}: degenerate keypoint bounding box (zero extent)")]
    DegenerateBbox { segment: String },

    #[error("segment {segment}: row width {found} does not match registry width {expected}")]
    WidthMismatch {
        segment: String,
        expected: usize,
        found: usize,
    },

    #[error("segment {segment}: unknown label {label} ({classes} classes declared)")]
    UnknownLabel {
        segment: String,
        label: usize,
        classes: usize,
    },

    #[error("segment {segment}: missing file {path}")]
    MissingFile { segment: String, path: PathBuf },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("malformed segment file {path}: {reason}")]
    SegmentFormat { path: PathBuf, reason: String },

    #[error("invalid synthetic spec: {0}")]
    SyntheticSpec(String),

    #[error("split needs at least 2 segments, got {0}")]
    TooFewSegments(usize),

    #[error("invalid split fraction {0}; expected 0 < fraction < 1")]
    SplitFraction(f64),

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("evaluation set is empty")]
    EmptyEvaluation,

    #[error("voting needs at least triple predictions, got {0} voters")]
    TooFewVoters(usize),

    #[error("vote panel: {0}")]
    Panel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
