use thiserror::Error;

/// Errors raised by the tracking engine and its satellites.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite box coordinate: {0}")]
    NonFiniteBox(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got} (det {det_id})")]
    DimensionMismatch { expected: usize, got: usize, det_id: u64 },
    #[error("detection {0} has no object_id but the synthetic-identity oracle requires one")]
    MissingObjectId(u64),
    #[error("pairwise matrix has shape {got_rows}x{got_cols}, expected {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("tracklet store already initialized")]
    AlreadyInitialized,
    #[error("tracklet store not initialized")]
    NotInitialized,
    #[error("first-frame detection must be at t = 0, got t = {0}")]
    FirstFrameNotZero(usize),
    #[error("frame {got} processed out of order (expected {expected})")]
    FrameOrder { expected: usize, got: usize },
    #[error("tracklet {earlier} ends at {end} which is not before tracklet {later} start {start}")]
    TemporalOrder {
        earlier: usize,
        later: usize,
        end: usize,
        start: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("length mismatch: {preds} predictions vs {truth} ground-truth frames")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("unknown video {0}")]
    UnknownVideo(i64),
    #[error("unknown scenario preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
