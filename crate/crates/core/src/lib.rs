//! Online single-object tracking by dynamic programming over tracklets.
//!
//! Detections are linked frame to frame into tracklets; a scoring table over
//! tracklets is kept up to date as frames arrive, and the output at each
//! frame comes from the best-scoring track. The crate also contains a
//! short-term local tracker, a hard-example miner over an embedding
//! gallery, a synthetic detection stream generator and evaluation metrics.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, with `F32` variants
//! for the common types.

pub mod detection;
pub mod dp;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod miner;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod short_term;
pub mod simulator;
pub mod tracker;
pub mod tracklet;

pub use detection::{Detection, Frame};
pub use dp::{DpParams, Selection, ThetaTable};
pub use error::{Error, Result};
pub use geometry::{iou, l1_distance, spatial_distance, BBox, CornerBox, PixelBox};
pub use metrics::{EvalReport, PredictionRecord};
pub use miner::{Gallery, GalleryEntry, JitterParams};
pub use oracle::{OracleKind, SimilarityOracle, SyntheticIdentityParams};
pub use scalar::Scalar;
pub use short_term::{ShortTermParams, ShortTermTracker};
pub use simulator::{Scenario, ScenarioSpec};
pub use tracker::{ArgmaxTracker, FrameOutput, OnlineTracker, TdpaConfig, TdpaTracker};
pub use tracklet::{BuilderParams, Tracklet, TrackletId, TrackletStore};

pub type BBoxF64 = BBox<f64>;
pub type BBoxF32 = BBox<f32>;
pub type DetectionF64 = Detection<f64>;
pub type DetectionF32 = Detection<f32>;
pub type OracleF64 = OracleKind<f64>;
pub type OracleF32 = OracleKind<f32>;
pub type TdpaConfigF64 = TdpaConfig<f64>;
pub type TdpaTrackerF64 = TdpaTracker<f64, OracleKind<f64>>;
pub type TdpaTrackerF32 = TdpaTracker<f32, OracleKind<f32>>;
pub type ArgmaxTrackerF64 = ArgmaxTracker<f64>;
pub type ShortTermTrackerF64 = ShortTermTracker<f64, OracleKind<f64>>;
pub type FrameOutputF64 = FrameOutput<f64>;
pub type PredictionF64 = PredictionRecord<f64>;
pub type ScenarioF64 = Scenario<f64>;
pub type GalleryF64 = Gallery<f64>;
