use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading, validating, or aligning data files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate id \"{0}\"")]
    DuplicateId(String),
    #[error("line {line}: negative label {label}")]
    NegativeLabel { line: usize, label: i64 },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("label space needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {class} has {count} examples; at least 3 are needed to populate every split")]
    ClassTooSmall { class: usize, count: usize },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("soft labels for \"{id}\": length {len}, expected {expected}")]
    SoftLabelLength { id: String, len: usize, expected: usize },
    #[error("soft labels for \"{id}\": sum {sum} is not within 1e-6 of 1")]
    SoftLabelSum { id: String, sum: f64 },
    #[error("soft labels for \"{id}\": negative entry {value} at class {class}")]
    SoftLabelNegative { id: String, class: usize, value: f64 },
    #[error("soft labels for \"{id}\": non-finite entry")]
    SoftLabelNonFinite { id: String },
    #[error("no soft labels for id \"{0}\"")]
    MissingSoftLabel(String),
    #[error("vocabulary of {vocab} tokens does not fit a model with vocab_size {model}")]
    VocabularyMismatch { vocab: usize, model: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Errors raised by the neural network layers.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("token id {id} >= vocab_size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("example {index} has true_len 0")]
    EmptySequence { index: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
}

/// Errors raised by the loss functions.
#[derive(Debug, Error)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("row {row} of the target distribution is not on the simplex")]
    NotOnSimplex { row: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("lambda must be finite and >= 0, got {0}")]
    BadLambda(f64),
    #[error("temperature {0} is not supported; only 1 is implemented")]
    UnsupportedTemperature(f64),
}

/// Errors raised while training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training split is empty")]
    EmptyTrainingSplit,
    #[error("validation split is empty")]
    EmptyValidationSplit,
    #[error("non-finite gradient in parameter block {0}")]
    NonFiniteGradient(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Errors raised while reading or writing checkpoints.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported checkpoint format version \"{0}\"")]
    Version(String),
    #[error("checkpoint checksum mismatch (expected {expected}, found {found})")]
    Checksum { expected: String, found: String },
    #[error("corrupted checkpoint: {0}")]
    Corrupt(String),
}

/// Errors raised by metrics and reports.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{pred} predictions for {truth} labels")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Top-level error for operations spanning several modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("lambda {lambda}, seed {seed}: {source}")]
    SweepCell {
        lambda: f64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
