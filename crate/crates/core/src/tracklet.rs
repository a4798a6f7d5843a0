//! Tracklet building: per-frame extension of existing tracklets, or spawning
//! of new single-detection tracklets whenever the match is weak or ambiguous.

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Frame};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::oracle::PairwiseScores;
use crate::scalar::Scalar;

pub type TrackletId = usize;

/// A detection as remembered by its tracklet: the embedding is dropped and
/// the two first-frame scores are cached at the frame the detection arrives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedDetection<T> {
    pub t: Frame,
    pub bbox: BBox<T>,
    pub det_id: u64,
    pub object_id: Option<i64>,
    pub ff_score: T,
    pub ff_tracklet_score: T,
}

impl<T: Scalar> TrackedDetection<T> {
    /// The detection's contribution to its tracklet's unary score.
    #[inline]
    pub fn unary_term(&self, w_ff: T) -> T {
        w_ff * self.ff_score + (T::one() - w_ff) * self.ff_tracklet_score
    }
}

/// A gap-free run of detections, one per frame from `start()` to `end()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet<T> {
    pub id: TrackletId,
    pub detections: Vec<TrackedDetection<T>>,
    pub is_ff: bool,
    pub frozen: bool,
}

impl<T: Scalar> Tracklet<T> {
    pub fn start(&self) -> Frame {
        self.detections[0].t
    }

    pub fn end(&self) -> Frame {
        self.detections[self.detections.len() - 1].t
    }

    pub fn first(&self) -> &TrackedDetection<T> {
        &self.detections[0]
    }

    pub fn last(&self) -> &TrackedDetection<T> {
        &self.detections[self.detections.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn at(&self, t: Frame) -> Option<&TrackedDetection<T>> {
        if t < self.start() || t > self.end() {
            return None;
        }
        self.detections.get(t - self.start())
    }
}

/// Extension threshold, ambiguity margin and spatial gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuilderParams<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Scalar> Default for BuilderParams<T> {
    fn default() -> Self {
        BuilderParams {
            alpha: T::of(0.5),
            beta: T::of(0.1),
            gamma: T::of(0.3),
        }
    }
}

impl<T: Scalar> BuilderParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()) {
            return Err(Error::InvalidParam("alpha, beta and gamma must be finite".into()));
        }
        if self.beta < T::zero() {
            return Err(Error::InvalidParam(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.gamma <= T::zero() {
            return Err(Error::InvalidParam(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Outcome for one current-frame detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchDecision<T> {
    pub det_id: u64,
    /// Best score against any previous detection.
    pub s1: T,
    /// Index into the previous detections of the best match, if any column exists.
    pub best_prev: Option<usize>,
    /// Best score of any other current detection against `best_prev`.
    pub s2: T,
    /// Best score of this detection against any other previous detection.
    pub s3: T,
    pub extended: bool,
    pub tracklet: TrackletId,
}

/// Everything that changed while processing one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameUpdate<T> {
    pub t: Frame,
    pub extended: Vec<TrackletId>,
    pub created: Vec<TrackletId>,
    pub frozen: Vec<TrackletId>,
    pub decisions: Vec<MatchDecision<T>>,
}

impl<T> FrameUpdate<T> {
    /// Tracklets whose score must be recomputed: extended first, then created.
    pub fn changed(&self) -> impl Iterator<Item = TrackletId> + '_ {
        self.extended.iter().chain(&self.created).copied()
    }

    pub fn changed_len(&self) -> usize {
        self.extended.len() + self.created.len()
    }
}

/// All tracklets of one tracker instance plus the previous frame's detections.
#[derive(Debug, Clone)]
pub struct TrackletStore<T> {
    tracklets: Vec<Tracklet<T>>,
    ff_id: Option<TrackletId>,
    prev_dets: Vec<Detection<T>>,
    prev_owner: Vec<TrackletId>,
    ff_latest: Option<Detection<T>>,
    active: Vec<TrackletId>,
    frozen_by_end: Vec<TrackletId>,
    last_frame: Option<Frame>,
}

impl<T: Scalar> Default for TrackletStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> TrackletStore<T> {
    pub fn new() -> Self {
        TrackletStore {
            tracklets: Vec::new(),
            ff_id: None,
            prev_dets: Vec::new(),
            prev_owner: Vec::new(),
            ff_latest: None,
            active: Vec::new(),
            frozen_by_end: Vec::new(),
            last_frame: None,
        }
    }

    /// Seeds the store with the first-frame template, which must be at `t = 0`.
    pub fn init_tracklets(&mut self, ff_detection: Detection<T>, ff_tracklet_score: T) -> Result<TrackletId> {
        if ff_detection.t != 0 {
            return Err(Error::FirstFrameNotZero(ff_detection.t));
        }
        self.init_at(ff_detection, ff_tracklet_score)
    }

    /// Seeds the store with a template at any frame; used when re-initializing
    /// a tracker mid-sequence.
    pub fn init_at(&mut self, ff_detection: Detection<T>, ff_tracklet_score: T) -> Result<TrackletId> {
        if self.ff_id.is_some() {
            return Err(Error::AlreadyInitialized);
        }
        let tracked = TrackedDetection {
            t: ff_detection.t,
            bbox: ff_detection.bbox,
            det_id: ff_detection.det_id,
            object_id: ff_detection.object_id,
            ff_score: ff_detection.ff_score,
            ff_tracklet_score,
        };
        self.tracklets.push(Tracklet {
            id: 0,
            detections: vec![tracked],
            is_ff: true,
            frozen: false,
        });
        self.ff_id = Some(0);
        self.active = vec![0];
        self.prev_owner = vec![0];
        self.last_frame = Some(ff_detection.t);
        self.ff_latest = Some(ff_detection.clone());
        self.prev_dets = vec![ff_detection];
        Ok(0)
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }

    pub fn tracklets(&self) -> &[Tracklet<T>] {
        &self.tracklets
    }

    pub fn get(&self, id: TrackletId) -> &Tracklet<T> {
        &self.tracklets[id]
    }

    pub fn ff_id(&self) -> Option<TrackletId> {
        self.ff_id
    }

    pub fn last_frame(&self) -> Option<Frame> {
        self.last_frame
    }

    /// Detections of the most recently processed frame.
    pub fn prev_dets(&self) -> &[Detection<T>] {
        &self.prev_dets
    }

    /// Most recent detection of the first-frame tracklet.
    pub fn ff_latest(&self) -> Option<&Detection<T>> {
        self.ff_latest.as_ref()
    }

    /// Frozen tracklets, ordered by nondecreasing end frame.
    pub fn frozen_by_end(&self) -> &[TrackletId] {
        &self.frozen_by_end
    }

    /// Frozen tracklets whose end frame lies in `[lo, hi]`.
    pub fn frozen_ending_within(&self, lo: Frame, hi: Frame) -> &[TrackletId] {
        let ends = |id: &TrackletId| self.tracklets[*id].end();
        let a = self.frozen_by_end.partition_point(|id| ends(id) < lo);
        let b = self.frozen_by_end.partition_point(|id| ends(id) <= hi);
        &self.frozen_by_end[a..b.max(a)]
    }

    /// Processes frame `t = last_frame + 1`.
    ///
    /// `pairwise[i][j]` scores `dets_t[i]` against `prev_dets()[j]`;
    /// `ff_tracklet_scores[i]` is cached on `dets_t[i]`. A tracklet receives at
    /// most one detection per frame: a detection whose best match was already
    /// claimed earlier in this frame (only possible when `beta == 0` and scores
    /// tie) starts a new tracklet.
    pub fn update_tracklets(
        &mut self,
        dets_t: Vec<Detection<T>>,
        ff_tracklet_scores: &[T],
        pairwise: &PairwiseScores<T>,
        params: &BuilderParams<T>,
    ) -> Result<FrameUpdate<T>> {
        let last = self.last_frame.ok_or(Error::NotInitialized)?;
        let t = last + 1;
        if let Some(bad) = dets_t.iter().find(|d| d.t != t) {
            return Err(Error::FrameOrder { expected: t, got: bad.t });
        }
        let (n, m) = (dets_t.len(), self.prev_dets.len());
        if pairwise.rows() != n || pairwise.cols() != m || ff_tracklet_scores.len() != n {
            return Err(Error::ShapeMismatch {
                rows: n,
                cols: m,
                got_rows: pairwise.rows(),
                got_cols: pairwise.cols(),
            });
        }

        let ninf = T::neg_infinity();
        // Per-column best and runner-up rows, for s2.
        let mut col_best = vec![(ninf, usize::MAX); m];
        let mut col_second = vec![ninf; m];
        for i in 0..n {
            for (j, (best, second)) in col_best.iter_mut().zip(col_second.iter_mut()).enumerate() {
                let v = pairwise.get(i, j);
                if best.1 == usize::MAX || v > best.0 {
                    *second = if best.1 == usize::MAX { ninf } else { best.0 };
                    *best = (v, i);
                } else if v > *second {
                    *second = v;
                }
            }
        }

        let mut extended_now = vec![false; self.tracklets.len()];
        let mut update = FrameUpdate {
            t,
            extended: Vec::new(),
            created: Vec::new(),
            frozen: Vec::new(),
            decisions: Vec::with_capacity(n),
        };
        let mut owners = Vec::with_capacity(n);

        for (i, det) in dets_t.iter().enumerate() {
            let row = pairwise.row(i);
            let mut best_j: Option<usize> = None;
            for (j, &v) in row.iter().enumerate() {
                match best_j {
                    None => best_j = Some(j),
                    Some(b) => {
                        let bv = row[b];
                        if v > bv || (v == bv && self.prev_dets[j].det_id < self.prev_dets[b].det_id) {
                            best_j = Some(j);
                        }
                    }
                }
            }
            let (s1, s2, s3) = match best_j {
                None => (ninf, ninf, ninf),
                Some(b) => {
                    let s2 = if col_best[b].1 == i { col_second[b] } else { col_best[b].0 };
                    let s3 = row
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != b)
                        .map(|(_, &v)| v)
                        .fold(ninf, T::max);
                    (row[b], s2, s3)
                }
            };
            let accept = s1 > params.alpha && s2 <= s1 - params.beta && s3 <= s1 - params.beta;
            let tracked = TrackedDetection {
                t,
                bbox: det.bbox,
                det_id: det.det_id,
                object_id: det.object_id,
                ff_score: det.ff_score,
                ff_tracklet_score: ff_tracklet_scores[i],
            };
            let target = best_j.map(|b| self.prev_owner[b]);
            let (extended, tracklet) = match target {
                Some(tid) if accept && !extended_now[tid] => {
                    extended_now[tid] = true;
                    self.tracklets[tid].detections.push(tracked);
                    update.extended.push(tid);
                    (true, tid)
                }
                _ => {
                    let id = self.tracklets.len();
                    self.tracklets.push(Tracklet {
                        id,
                        detections: vec![tracked],
                        is_ff: false,
                        frozen: false,
                    });
                    extended_now.push(false);
                    update.created.push(id);
                    (false, id)
                }
            };
            owners.push(tracklet);
            update.decisions.push(MatchDecision {
                det_id: det.det_id,
                s1,
                best_prev: best_j,
                s2,
                s3,
                extended,
                tracklet,
            });
        }

        let mut still_active = Vec::with_capacity(update.changed_len());
        for &id in &self.active {
            if extended_now[id] {
                still_active.push(id);
            } else {
                self.tracklets[id].frozen = true;
                self.frozen_by_end.push(id);
                update.frozen.push(id);
            }
        }
        still_active.extend(update.created.iter().copied());
        self.active = still_active;

        if let Some(ff) = self.ff_id {
            if let Some(pos) = owners.iter().position(|&o| o == ff) {
                self.ff_latest = Some(dets_t[pos].clone());
            }
        }
        self.prev_owner = owners;
        self.prev_dets = dets_t;
        self.last_frame = Some(t);
        Ok(update)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(t: Frame, id: u64, x: f64) -> Detection<f64> {
        Detection::new(t, BBox::new(x, 0.5, 0.1, 0.1).unwrap(), 0.5, vec![1.0], id)
    }

    fn store() -> TrackletStore<f64> {
        let mut s = TrackletStore::new();
        s.init_tracklets(det(0, 100, 0.5), 1.0).unwrap();
        s
    }

    #[test]
    fn init_creates_single_ff_tracklet() {
        let s = store();
        assert_eq!(s.len(), 1);
        assert_eq!(s.ff_id(), Some(0));
        assert!(s.get(0).is_ff);
        assert_eq!(s.get(0).len(), 1);
    }

    #[test]
    fn init_twice_or_late_is_error() {
        let mut s = store();
        assert_eq!(s.init_tracklets(det(0, 1, 0.5), 1.0), Err(Error::AlreadyInitialized));
        let mut fresh = TrackletStore::<f64>::new();
        assert_eq!(fresh.init_tracklets(det(3, 1, 0.5), 1.0), Err(Error::FirstFrameNotZero(3)));
    }

    #[test]
    fn single_confident_match_extends() {
        let mut s = store();
        let p = PairwiseScores::from_rows(vec![vec![0.9]]).unwrap();
        let u = s
            .update_tracklets(vec![det(1, 1, 0.5)], &[0.9], &p, &BuilderParams::default())
            .unwrap();
        assert_eq!(u.extended, vec![0]);
        assert!(u.created.is_empty());
        let d = u.decisions[0];
        assert_eq!((d.s2, d.s3), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        assert_eq!(s.get(0).len(), 2);
        assert_eq!(s.ff_latest().unwrap().det_id, 1);
    }

    #[test]
    fn ambiguous_matches_spawn() {
        let mut s = store();
        let p = PairwiseScores::from_rows(vec![vec![0.90], vec![0.85]]).unwrap();
        let u = s
            .update_tracklets(
                vec![det(1, 1, 0.5), det(1, 2, 0.52)],
                &[0.0, 0.0],
                &p,
                &BuilderParams::default(),
            )
            .unwrap();
        assert!(u.extended.is_empty());
        assert_eq!(u.created, vec![1, 2]);
        assert_eq!(u.frozen, vec![0]);
        assert!(s.get(0).frozen);
        assert_eq!(s.frozen_by_end(), &[0]);
    }

    #[test]
    fn shape_and_order_errors() {
        let mut s = store();
        let p = PairwiseScores::from_rows(vec![vec![0.9, 0.1]]).unwrap();
        let e = s.update_tracklets(vec![det(1, 1, 0.5)], &[0.0], &p, &BuilderParams::default());
        assert!(matches!(e, Err(Error::ShapeMismatch { .. })));
        let p = PairwiseScores::from_rows(vec![vec![0.9]]).unwrap();
        let e = s.update_tracklets(vec![det(2, 1, 0.5)], &[0.0], &p, &BuilderParams::default());
        assert_eq!(e.unwrap_err(), Error::FrameOrder { expected: 1, got: 2 });
        let mut empty = TrackletStore::<f64>::new();
        let e = empty.update_tracklets(vec![], &[], &PairwiseScores::filled(0, 0, 0.0), &BuilderParams::default());
        assert_eq!(e.unwrap_err(), Error::NotInitialized);
    }

    #[test]
    fn zero_margin_ties_never_double_extend() {
        let mut s = store();
        let p = PairwiseScores::from_rows(vec![vec![0.9], vec![0.9]]).unwrap();
        let params = BuilderParams { alpha: 0.5, beta: 0.0, gamma: 0.3 };
        let u = s
            .update_tracklets(vec![det(1, 1, 0.5), det(1, 2, 0.5)], &[0.0, 0.0], &p, &params)
            .unwrap();
        assert_eq!(u.extended, vec![0]);
        assert_eq!(u.created, vec![1]);
    }

    #[test]
    fn argmax_ties_prefer_lowest_prev_det_id() {
        let mut s = store();
        // frame 1: two well separated spawns (ids 7 and 3)
        let p = PairwiseScores::from_rows(vec![vec![0.1], vec![0.1]]).unwrap();
        s.update_tracklets(vec![det(1, 7, 0.2), det(1, 3, 0.8)], &[0.0, 0.0], &p, &BuilderParams::default())
            .unwrap();
        let p = PairwiseScores::from_rows(vec![vec![0.6, 0.6]]).unwrap();
        let u = s
            .update_tracklets(vec![det(2, 9, 0.5)], &[0.0], &p, &BuilderParams::default())
            .unwrap();
        assert_eq!(u.decisions[0].best_prev, Some(1));
    }

    #[test]
    fn frozen_window_query() {
        let mut s = store();
        let params = BuilderParams::default();
        for t in 1..6 {
            // every frame a lone spawn: nothing matches
            let p = PairwiseScores::from_rows(vec![vec![0.0]]).unwrap();
            s.update_tracklets(vec![det(t, t as u64, 0.5)], &[0.0], &p, &params).unwrap();
        }
        let ends: Vec<_> = s.frozen_by_end().iter().map(|&id| s.get(id).end()).collect();
        assert_eq!(ends, vec![0, 1, 2, 3, 4]);
        let w: Vec<_> = s.frozen_ending_within(2, 3).to_vec();
        assert_eq!(w.iter().map(|&id| s.get(id).end()).collect::<Vec<_>>(), vec![2, 3]);
        assert!(s.frozen_ending_within(9, 12).is_empty());
    }
}
