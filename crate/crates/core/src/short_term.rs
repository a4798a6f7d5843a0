//! Reset-friendly short-term tracking over a single previous-frame result.
//!
//! Each step scores candidates by `ff score + previous-frame score +
//! delta * L1 distance to the previous box`, discards candidates whose L∞
//! distance to the previous box exceeds `xi`, and returns the best one. With
//! no valid candidate the previous result is repeated.

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Frame};
use crate::error::{Error, Result};
use crate::geometry::{iou, l1_distance, spatial_distance, BBox};
use crate::oracle::SimilarityOracle;
use crate::rng::keyed_normal;
use crate::scalar::{cmp_scalar, Scalar};
use crate::tracker::{template_from_box, FrameOutput, OnlineTracker};

/// Offsets, in units of box width/height, used on both axes by default.
pub const DEFAULT_SHIFT_GRID: [f64; 7] = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];

/// Detection ids at or above this value denote shifted proposals.
pub const PROPOSAL_ID_BASE: u64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortTermParams<T> {
    /// Weight of the L1 jump distance; negative penalizes jumps.
    pub delta: T,
    /// L∞ cutoff around the previous box.
    pub xi: T,
    pub shift_grid: Vec<T>,
}

impl<T: Scalar> Default for ShortTermParams<T> {
    fn default() -> Self {
        ShortTermParams {
            delta: -T::one(),
            xi: T::of(0.5),
            shift_grid: DEFAULT_SHIFT_GRID.iter().map(|&v| T::of(v)).collect(),
        }
    }
}

impl<T: Scalar> ShortTermParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(Error::InvalidParam("delta must be finite".into()));
        }
        if !(self.xi > T::zero() && self.xi.is_finite()) {
            return Err(Error::InvalidParam(format!("xi must be > 0, got {}", self.xi)));
        }
        if self.shift_grid.is_empty() || !self.shift_grid.iter().any(|&s| s == T::zero()) {
            return Err(Error::InvalidParam("shift_grid must be non-empty and contain 0".into()));
        }
        Ok(())
    }
}

/// `prev` shifted by every `(sx * w, sy * h)` pair from `grid x grid`, row-major
/// in `sx`. Shifted centers are clamped to the frame.
pub fn shifted_proposals<T: Scalar>(prev: &BBox<T>, grid: &[T]) -> Vec<BBox<T>> {
    let mut out = Vec::with_capacity(grid.len() * grid.len());
    for &sx in grid {
        for &sy in grid {
            let x = (prev.x + sx * prev.w).max(T::zero()).min(T::one());
            let y = (prev.y + sy * prev.h).max(T::zero()).min(T::one());
            out.push(BBox { x, y, w: prev.w, h: prev.h });
        }
    }
    out
}

/// Turns shifted boxes into scorable detections.
///
/// No box regression happens: a proposal keeps its box and takes its
/// appearance from what it covers, i.e. the embedding of the best-overlapping
/// frame detection blended with a fixed background vector in proportion to
/// the overlap. Proposals covering no detection are dropped.
pub fn proposal_detections<T: Scalar>(
    t: Frame,
    boxes: &[BBox<T>],
    frame: &[Detection<T>],
    seed: u64,
) -> Vec<Detection<T>> {
    let Some(dim) = frame.first().map(|d| d.embedding.len()) else {
        return Vec::new();
    };
    let background: Vec<T> = (0..dim)
        .map(|k| T::of(keyed_normal(seed, &[0xb6, k as u64])))
        .collect();
    let bg_norm = background.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    boxes
        .iter()
        .enumerate()
        .filter_map(|(k, b)| {
            let (overlap, donor) = frame
                .iter()
                .map(|d| (iou(b, &d.bbox), d))
                .max_by(|x, y| cmp_scalar(x.0, y.0).then(y.1.det_id.cmp(&x.1.det_id)))?;
            // Shifts of exactly one box size touch the donor; rounding can
            // leave a sliver of overlap there.
            if overlap <= T::of(1e-9) {
                return None;
            }
            let donor_norm = donor.embedding.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            let scale = if bg_norm > T::zero() { donor_norm / bg_norm } else { T::zero() };
            let embedding = donor
                .embedding
                .iter()
                .zip(&background)
                .map(|(&e, &g)| overlap * e + (T::one() - overlap) * scale * g)
                .collect();
            let half = T::of(0.5);
            Some(Detection {
                t,
                bbox: *b,
                ff_score: donor.ff_score * overlap,
                embedding,
                object_id: if overlap >= half { donor.object_id } else { Some(i64::MIN) },
                det_id: PROPOSAL_ID_BASE + k as u64,
            })
        })
        .collect()
}

/// Result of one short-term step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub detection: Detection<T>,
    /// Combined score of the chosen candidate, `-inf` when carried forward.
    pub score: T,
    pub carried_forward: bool,
}

/// Combined short-term score of one candidate, before the `xi` cut.
pub fn combined_score<T: Scalar, O: SimilarityOracle<T> + ?Sized>(
    cand: &Detection<T>,
    prev: &Detection<T>,
    ff: &Detection<T>,
    params: &ShortTermParams<T>,
    oracle: &O,
    seed: u64,
) -> Result<T> {
    let det_score = oracle.score(cand, ff, seed)?;
    let prev_score = oracle.score(cand, prev, seed)?;
    Ok(det_score + prev_score + params.delta * l1_distance(&cand.bbox, &prev.bbox))
}

/// One short-term step. Ties keep the earliest candidate.
pub fn short_term_step<T: Scalar, O: SimilarityOracle<T> + ?Sized>(
    prev_det: &Detection<T>,
    candidates: &[Detection<T>],
    params: &ShortTermParams<T>,
    oracle: &O,
    ff_detection: &Detection<T>,
    seed: u64,
) -> Result<StepOutcome<T>> {
    let mut best: Option<(T, usize)> = None;
    for (k, cand) in candidates.iter().enumerate() {
        if spatial_distance(&cand.bbox, &prev_det.bbox) > params.xi {
            continue;
        }
        let s = combined_score(cand, prev_det, ff_detection, params, oracle, seed)?;
        if s == T::neg_infinity() {
            continue;
        }
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, k));
        }
    }
    Ok(match best {
        Some((score, k)) => StepOutcome {
            detection: candidates[k].clone(),
            score,
            carried_forward: false,
        },
        None => StepOutcome {
            detection: prev_det.clone(),
            score: T::neg_infinity(),
            carried_forward: true,
        },
    })
}

/// Stateful wrapper that feeds the step function with the frame's detections
/// plus shifted proposals around the previous result.
#[derive(Debug, Clone)]
pub struct ShortTermTracker<T, O> {
    oracle: O,
    params: ShortTermParams<T>,
    seed: u64,
    ff: Detection<T>,
    prev: Detection<T>,
    last_t: Frame,
}

impl<T: Scalar, O: SimilarityOracle<T>> ShortTermTracker<T, O> {
    pub fn new(ff_detection: Detection<T>, oracle: O, params: ShortTermParams<T>, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(ShortTermTracker {
            oracle,
            params,
            seed,
            last_t: ff_detection.t,
            prev: ff_detection.clone(),
            ff: ff_detection,
        })
    }

    pub fn previous(&self) -> &Detection<T> {
        &self.prev
    }

    pub fn step(&mut self, t: Frame, frame: &[Detection<T>]) -> Result<(FrameOutput<T>, StepOutcome<T>)> {
        if t != self.last_t + 1 {
            return Err(Error::FrameOrder { expected: self.last_t + 1, got: t });
        }
        let boxes = shifted_proposals(&self.prev.bbox, &self.params.shift_grid);
        let mut candidates = frame.to_vec();
        candidates.extend(proposal_detections(t, &boxes, frame, self.seed));
        let outcome = short_term_step(&self.prev, &candidates, &self.params, &self.oracle, &self.ff, self.seed)?;
        let mut chosen = outcome.detection.clone();
        chosen.t = t;
        let out = FrameOutput {
            t,
            bbox: chosen.bbox,
            confidence: if outcome.carried_forward { T::zero() } else { outcome.score },
            present: !outcome.carried_forward,
            det_id: (chosen.det_id < PROPOSAL_ID_BASE).then_some(chosen.det_id),
            object_id: chosen.object_id.filter(|&id| id != i64::MIN),
        };
        self.prev = chosen;
        self.last_t = t;
        Ok((out, outcome))
    }
}

impl<T: Scalar, O: SimilarityOracle<T>> OnlineTracker<T> for ShortTermTracker<T, O> {
    fn initialize(&mut self, t: Frame, bbox: BBox<T>, frame: &[Detection<T>]) -> Result<FrameOutput<T>> {
        self.prev = template_from_box(t, bbox, frame, &self.ff);
        self.last_t = t;
        Ok(FrameOutput {
            t,
            bbox,
            confidence: T::one(),
            present: true,
            det_id: None,
            object_id: self.prev.object_id,
        })
    }

    fn track(&mut self, t: Frame, frame: &[Detection<T>]) -> Result<FrameOutput<T>> {
        Ok(self.step(t, frame)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{OracleKind, SyntheticIdentityParams};

    fn det(id: u64, x: f64, y: f64, obj: i64) -> Detection<f64> {
        Detection::new(1, BBox::new(x, y, 0.1, 0.1).unwrap(), 0.0, vec![1.0, 0.0], id).with_object(obj)
    }

    #[test]
    fn default_grid_yields_49_boxes_including_prev() {
        let prev = BBox::new(0.5, 0.5, 0.1, 0.2).unwrap();
        let p = ShortTermParams::<f64>::default();
        let boxes = shifted_proposals(&prev, &p.shift_grid);
        assert_eq!(boxes.len(), 49);
        assert!(boxes.contains(&prev));
        assert_eq!(shifted_proposals(&prev, &[0.0]), vec![prev]);
    }

    #[test]
    fn edge_boxes_stay_valid() {
        let prev = BBox::new(0.98, 0.01, 0.2, 0.2).unwrap();
        for b in shifted_proposals(&prev, &ShortTermParams::<f64>::default().shift_grid) {
            assert!((0.0..=1.0).contains(&b.x) && (0.0..=1.0).contains(&b.y));
            assert_eq!((b.w, b.h), (0.2, 0.2));
        }
    }

    #[test]
    fn xi_filter_drops_far_candidates() {
        let oracle = OracleKind::SyntheticIdentity(SyntheticIdentityParams::new(1.0, 0.0));
        let ff = det(0, 0.3, 0.5, 1);
        let prev = det(1, 0.3, 0.5, 1);
        let near = det(2, 0.32, 0.5, 2);
        let far = det(3, 0.85, 0.5, 1);
        let params = ShortTermParams::default();
        let out = short_term_step(&prev, &[far.clone(), near.clone()], &params, &oracle, &ff, 0).unwrap();
        assert_eq!(out.detection.det_id, 2);
        let out = short_term_step(&prev, &[far], &params, &oracle, &ff, 0).unwrap();
        assert!(out.carried_forward);
        assert_eq!(out.detection.det_id, 1);
        let out = short_term_step(&prev, &[], &params, &oracle, &ff, 0).unwrap();
        assert!(out.carried_forward);
    }

    #[test]
    fn identical_top_candidate_wins() {
        let oracle = OracleKind::<f64>::CosineEmbedding;
        let ff = det(0, 0.5, 0.5, 1);
        let prev = det(1, 0.5, 0.5, 1);
        let mut other = det(5, 0.55, 0.5, 2);
        other.embedding = vec![0.6, 0.8];
        let same = det(4, 0.5, 0.5, 1);
        let out = short_term_step(&prev, &[other, same], &ShortTermParams::default(), &oracle, &ff, 0).unwrap();
        assert_eq!(out.detection.det_id, 4);
        assert!((out.score - 2.0).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let mut p = ShortTermParams::<f64>::default();
        p.shift_grid = vec![0.5];
        assert!(p.validate().is_err());
        p.shift_grid = vec![];
        assert!(p.validate().is_err());
        let p = ShortTermParams { xi: 0.0, ..ShortTermParams::<f64>::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn proposals_inherit_covered_appearance() {
        let frame = vec![Detection::new(1, BBox::new(0.5, 0.5, 0.1, 0.1).unwrap(), 0.8, vec![1.0, 0.0, 0.0], 3)];
        let boxes = shifted_proposals(&BBox::new(0.5, 0.5, 0.1, 0.1).unwrap(), &ShortTermParams::<f64>::default().shift_grid);
        let props = proposal_detections(1, &boxes, &frame, 9);
        // Only shifts of magnitude < 1 box overlap the detection: 3 x 3.
        assert_eq!(props.len(), 9);
        let centered = props.iter().find(|d| d.bbox == frame[0].bbox).unwrap();
        assert_eq!(centered.embedding, frame[0].embedding);
        assert!(props.iter().all(|d| d.det_id >= PROPOSAL_ID_BASE));
    }

    #[test]
    fn tracker_follows_and_carries() {
        let ff = Detection::new(0, BBox::new(0.3, 0.5, 0.1, 0.1).unwrap(), 0.9, vec![1.0, 0.0], 0);
        let mut tr = ShortTermTracker::new(ff, OracleKind::CosineEmbedding, ShortTermParams::default(), 0).unwrap();
        for t in 1..6 {
            let x = 0.3 + 0.02 * t as f64;
            let d = Detection::new(t, BBox::new(x, 0.5, 0.1, 0.1).unwrap(), 0.9, vec![1.0, 0.0], t as u64);
            let (o, _) = tr.step(t, &[d]).unwrap();
            assert!((o.bbox.x - x).abs() < 1e-12, "frame {t}: {}", o.bbox.x);
            assert_eq!(o.det_id, Some(t as u64));
        }
        let (o, s) = tr.step(6, &[]).unwrap();
        assert!(s.carried_forward && !o.present);
        assert!((o.bbox.x - 0.4).abs() < 1e-12);
        assert!(tr.step(8, &[]).is_err());
    }
}
