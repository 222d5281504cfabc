use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("topology needs at least 2 layer widths, got {0}")]
    TooFewLayers(usize),

    #[error("layer {layer} has width 0; every layer needs at least one neuron")]
    EmptyLayer { layer: usize },

    #[error("weight index (l={l}, i={i}, j={j}) is out of range")]
    IndexOutOfRange { l: usize, i: usize, j: usize },

    #[error("node index out of range: {0}")]
    NodeOutOfRange(String),

    #[error("{what}: expected length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: u64,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, field {field}: `{value}` is not a number")]
    NotANumber {
        row: u64,
        field: usize,
        value: String,
    },

    #[error("csv: {0}")]
    Csv(String),

    #[error("model file line {line}: malformed header, expected `{expected}`")]
    MalformedHeader { line: usize, expected: &'static str },

    #[error("weight count mismatch: topology needs {expected} weights, file has {found}")]
    WeightCountMismatch { expected: usize, found: usize },

    #[error("model file line {line}: `{value}` is not a valid weight")]
    MalformedWeight { line: usize, value: String },

    #[error("could not find a sample with all pre-activations at least {margin} from 0 after {attempts} attempts")]
    KinkAvoidance { margin: f64, attempts: usize },
}
