use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("missing header field `{0}`")]
    MissingField(String),
    #[error("unsupported interleave `{0}` (only bil is supported)")]
    UnsupportedInterleave(String),
    #[error("unsupported ENVI data type {0}")]
    UnsupportedDataType(u32),
    #[error("malformed wavelength list: {0}")]
    MalformedWavelengthList(String),
    #[error("malformed header value for `{key}`: {value}")]
    MalformedField { key: String, value: String },
    #[error("window out of bounds: {0}")]
    OutOfBounds(String),
    #[error("io failure: {0}")]
    IoFailure(String),
    #[error("invalid tile geometry: {0}")]
    InvalidGeometry(String),
    #[error("no bands fall inside [{lo_nm}, {hi_nm}] nm")]
    EmptySelection { lo_nm: f64, hi_nm: f64 },
    #[error("malformed signature table: {0}")]
    MalformedTable(String),
    #[error("target signature is zero on the cube's wavelength grid")]
    AllZeroSignature,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("class {class} has {count} samples, at least 2 are required")]
    DegenerateClass { class: usize, count: usize },
    #[error("matrix is not positive definite after regularization")]
    NotPositiveDefinite,
    #[error("column window starting at column {col0} has {count} valid pixels")]
    DegenerateWindow { col0: usize, count: usize },
    #[error("no statistics for class {0}")]
    MissingClassStats(usize),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("embedding dimension {0} is odd")]
    OddDimension(usize),
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error("cost matrix contains a non-finite entry")]
    NonFiniteCost,
    #[error("{ground_truth} ground-truth rows but only {predictions} predictions")]
    TooFewPredictions {
        ground_truth: usize,
        predictions: usize,
    },
    #[error("box has non-positive width or height")]
    DegenerateBox,
    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("need at least 4 correspondences, got {0}")]
    InsufficientPairs(usize),
    #[error("homography is not invertible")]
    NonInvertibleHomography,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
