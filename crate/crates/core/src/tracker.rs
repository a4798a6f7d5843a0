//! Streaming trackers: the full tracklet/DP tracker and the per-frame
//! argmax baseline. Both consume one frame of detections per call.

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Frame};
use crate::dp::{DpParams, ThetaTable};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::oracle::{pairwise_gated_scores, score_against_reference, SimilarityOracle};
use crate::scalar::{cmp_scalar, Scalar};
use crate::tracklet::{BuilderParams, FrameUpdate, TrackletId, TrackletStore};

/// What a tracker reports for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutput<T> {
    pub t: Frame,
    pub bbox: BBox<T>,
    pub confidence: T,
    pub present: bool,
    /// Detection backing the reported box (the carried-over one when absent).
    pub det_id: Option<u64>,
    pub object_id: Option<i64>,
}

/// A tracker that can be (re)started from a known box and then fed frames.
pub trait OnlineTracker<T: Scalar> {
    fn initialize(&mut self, t: Frame, bbox: BBox<T>, frame: &[Detection<T>]) -> Result<FrameOutput<T>>;
    fn track(&mut self, t: Frame, frame: &[Detection<T>]) -> Result<FrameOutput<T>>;
}

/// Builds a template detection for a known box: appearance comes from the
/// best-overlapping detection of that frame, else from `fallback`.
pub fn template_from_box<T: Scalar>(
    t: Frame,
    bbox: BBox<T>,
    frame: &[Detection<T>],
    fallback: &Detection<T>,
) -> Detection<T> {
    let donor = frame
        .iter()
        .map(|d| (iou(&d.bbox, &bbox), d))
        .filter(|(v, _)| *v > T::zero())
        .max_by(|a, b| cmp_scalar(a.0, b.0).then(b.1.det_id.cmp(&a.1.det_id)))
        .map(|(_, d)| d)
        .unwrap_or(fallback);
    Detection {
        t,
        bbox,
        ff_score: donor.ff_score,
        embedding: donor.embedding.clone(),
        object_id: donor.object_id,
        det_id: donor.det_id,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdpaConfig<T> {
    pub builder: BuilderParams<T>,
    pub dp: DpParams<T>,
    #[serde(default)]
    pub seed: u64,
}

impl<T: Scalar> Default for TdpaConfig<T> {
    fn default() -> Self {
        TdpaConfig {
            builder: BuilderParams::default(),
            dp: DpParams::default(),
            seed: 0,
        }
    }
}

impl<T: Scalar> TdpaConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.builder.validate()?;
        self.dp.validate()
    }
}

/// Tracklet building plus online DP selection.
#[derive(Debug, Clone)]
pub struct TdpaTracker<T: Scalar, O> {
    oracle: O,
    config: TdpaConfig<T>,
    store: TrackletStore<T>,
    table: ThetaTable<T>,
    template: Detection<T>,
    last_update: Option<FrameUpdate<T>>,
}

impl<T: Scalar, O: SimilarityOracle<T>> TdpaTracker<T, O> {
    /// Starts tracking from the first-frame template (which must be at `t = 0`).
    pub fn new(ff_detection: Detection<T>, oracle: O, config: TdpaConfig<T>) -> Result<Self> {
        if ff_detection.t != 0 {
            return Err(Error::FirstFrameNotZero(ff_detection.t));
        }
        Self::start_at(ff_detection, oracle, config)
    }

    fn start_at(ff_detection: Detection<T>, oracle: O, config: TdpaConfig<T>) -> Result<Self> {
        config.validate()?;
        let mut tracker = TdpaTracker {
            oracle,
            config,
            store: TrackletStore::new(),
            table: ThetaTable::new(),
            template: ff_detection.clone(),
            last_update: None,
        };
        tracker.reset_to(ff_detection)?;
        Ok(tracker)
    }

    fn reset_to(&mut self, ff_detection: Detection<T>) -> Result<()> {
        let self_score = self.oracle.score(&ff_detection, &ff_detection, self.config.seed)?;
        self.store = TrackletStore::new();
        self.store.init_at(ff_detection, self_score)?;
        self.table = ThetaTable::new();
        self.table.init(&self.store, &self.config.dp)?;
        self.last_update = None;
        Ok(())
    }

    pub fn config(&self) -> &TdpaConfig<T> {
        &self.config
    }

    pub fn store(&self) -> &TrackletStore<T> {
        &self.store
    }

    pub fn table(&self) -> &ThetaTable<T> {
        &self.table
    }

    /// Builder/DP changes from the most recent `step`.
    pub fn last_update(&self) -> Option<&FrameUpdate<T>> {
        self.last_update.as_ref()
    }

    /// Output for the frame the tracker was last advanced to.
    pub fn current_output(&mut self) -> Result<FrameOutput<T>> {
        let t = self.store.last_frame().ok_or(Error::NotInitialized)?;
        let s = self.table.select_output(&self.store, t, self.config.dp.w_ff)?;
        Ok(FrameOutput {
            t,
            bbox: s.bbox,
            confidence: s.confidence,
            present: s.present,
            det_id: Some(s.det_id),
            object_id: s.object_id,
        })
    }

    /// Tracklet chain currently explaining the target.
    pub fn track_chain(&mut self) -> Vec<TrackletId> {
        self.table.reconstruct_track(&self.store)
    }

    /// Advances one frame; `dets` must all carry the next frame index.
    pub fn step(&mut self, dets: Vec<Detection<T>>) -> Result<FrameOutput<T>> {
        let seed = self.config.seed;
        let pairwise = pairwise_gated_scores(
            &self.oracle,
            &dets,
            self.store.prev_dets(),
            self.config.builder.gamma,
            seed,
        )?;
        let reference = self.store.ff_latest().ok_or(Error::NotInitialized)?;
        let ff_tracklet = score_against_reference(&self.oracle, &dets, reference, seed)?;
        let update = self
            .store
            .update_tracklets(dets, &ff_tracklet, &pairwise, &self.config.builder)?;
        self.table.update_theta(&update, &self.store, &self.config.dp);
        self.last_update = Some(update);
        self.current_output()
    }
}

impl<T: Scalar, O: SimilarityOracle<T>> OnlineTracker<T> for TdpaTracker<T, O> {
    fn initialize(&mut self, t: Frame, bbox: BBox<T>, frame: &[Detection<T>]) -> Result<FrameOutput<T>> {
        let template = template_from_box(t, bbox, frame, &self.template);
        self.reset_to(template)?;
        self.current_output()
    }

    fn track(&mut self, t: Frame, frame: &[Detection<T>]) -> Result<FrameOutput<T>> {
        let expected = self.store.last_frame().map_or(0, |l| l + 1);
        if t != expected {
            return Err(Error::FrameOrder { expected, got: t });
        }
        self.step(frame.to_vec())
    }
}

/// Baseline: report the detection with the highest first-frame score.
#[derive(Debug, Clone)]
pub struct ArgmaxTracker<T> {
    last: FrameOutput<T>,
}

impl<T: Scalar> ArgmaxTracker<T> {
    pub fn new(ff_detection: &Detection<T>) -> Self {
        ArgmaxTracker {
            last: FrameOutput {
                t: ff_detection.t,
                bbox: ff_detection.bbox,
                confidence: ff_detection.ff_score,
                present: true,
                det_id: Some(ff_detection.det_id),
                object_id: ff_detection.object_id,
            },
        }
    }

    pub fn current_output(&self) -> FrameOutput<T> {
        self.last
    }

    /// Picks the highest `ff_score` (ties: lowest det_id). Without detections
    /// the previous box is repeated with confidence 0.
    pub fn step(&mut self, t: Frame, dets: &[Detection<T>]) -> FrameOutput<T> {
        let best = dets
            .iter()
            .max_by(|a, b| cmp_scalar(a.ff_score, b.ff_score).then(b.det_id.cmp(&a.det_id)));
        self.last = match best {
            Some(d) => FrameOutput {
                t,
                bbox: d.bbox,
                confidence: d.ff_score,
                present: true,
                det_id: Some(d.det_id),
                object_id: d.object_id,
            },
            None => FrameOutput {
                t,
                confidence: T::zero(),
                present: false,
                ..self.last
            },
        };
        self.last
    }
}

impl<T: Scalar> OnlineTracker<T> for ArgmaxTracker<T> {
    fn initialize(&mut self, t: Frame, bbox: BBox<T>, _frame: &[Detection<T>]) -> Result<FrameOutput<T>> {
        self.last = FrameOutput {
            t,
            bbox,
            confidence: T::one(),
            present: true,
            det_id: None,
            object_id: None,
        };
        Ok(self.last)
    }

    fn track(&mut self, t: Frame, frame: &[Detection<T>]) -> Result<FrameOutput<T>> {
        Ok(self.step(t, frame))
    }
}
