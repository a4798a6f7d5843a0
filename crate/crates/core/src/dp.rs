//! Track scoring by online dynamic programming over tracklets.
//!
//! A track is a chain of non-overlapping tracklets starting at the
//! first-frame tracklet. Its score is the sum of the tracklet unaries plus
//! `w_loc` times the location score of every consecutive pair. `theta[a]`
//! holds the best score of a track ending in `a` and is evaluated as
//!
//! ```text
//! theta[a] = unary(a) + max_p (theta[p] + w_loc * loc_score(p, a))
//! ```
//!
//! with exactly this association of the floating point additions, and with
//! `unary(a)` accumulated left to right from zero in time order. Predecessors
//! `p` must satisfy `end(p) < start(a)` and `start(a) - end(p) <= max_gap`.
//!
//! Because a predecessor must end before `a` starts, every admissible
//! predecessor is already frozen when `a` is created. The predecessor term is
//! therefore computed once per tracklet, and extending a tracklet only adds
//! its new unary contribution.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::detection::Frame;
use crate::error::{Error, Result};
use crate::geometry::{loc_score_boxes, BBox};
use crate::scalar::{cmp_scalar, Scalar};
use crate::tracklet::{FrameUpdate, Tracklet, TrackletId, TrackletStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpParams<T> {
    pub w_ff: T,
    pub w_loc: T,
    pub max_gap: usize,
}

impl<T: Scalar> Default for DpParams<T> {
    fn default() -> Self {
        DpParams {
            w_ff: T::of(0.5),
            w_loc: T::one(),
            max_gap: 1500,
        }
    }
}

impl<T: Scalar> DpParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_ff >= T::zero() && self.w_ff <= T::one()) {
            return Err(Error::InvalidParam(format!("w_ff must lie in [0, 1], got {}", self.w_ff)));
        }
        if !self.w_loc.is_finite() {
            return Err(Error::InvalidParam("w_loc must be finite".into()));
        }
        if self.max_gap < 1 {
            return Err(Error::InvalidParam("max_gap must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sum of the per-detection `w_ff` combinations, left to right.
pub fn unary<T: Scalar>(tr: &Tracklet<T>, w_ff: T) -> T {
    tr.detections
        .iter()
        .fold(T::zero(), |acc, d| acc + d.unary_term(w_ff))
}

/// Location score between the last box of `a` and the first box of `b`.
pub fn loc_score_tracklets<T: Scalar>(a: &Tracklet<T>, b: &Tracklet<T>) -> Result<T> {
    if a.end() >= b.start() {
        return Err(Error::TemporalOrder {
            earlier: a.id,
            later: b.id,
            end: a.end(),
            start: b.start(),
        });
    }
    Ok(loc_score_boxes(&a.last().bbox, &b.first().bbox))
}

/// `true` when `a` ranks above `b` in the tracklet argmax: higher score,
/// then the first-frame tracklet, then the lower id.
#[inline]
pub fn ranks_above<T: Scalar>(a: (T, bool, TrackletId), b: (T, bool, TrackletId)) -> bool {
    match cmp_scalar(a.0, b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (a.1 && !b.1) || (a.1 == b.1 && a.2 < b.2),
    }
}

#[derive(Debug, Clone, Copy)]
struct Ranked<T> {
    theta: T,
    is_ff: bool,
    id: TrackletId,
    version: u32,
}

impl<T: Scalar> PartialEq for Ranked<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Ranked<T> {}

impl<T: Scalar> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Ranked<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_scalar(self.theta, other.theta)
            .then(self.is_ff.cmp(&other.is_ff))
            .then(other.id.cmp(&self.id))
            .then(self.version.cmp(&other.version))
    }
}

/// Per-frame selection result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection<T> {
    pub tracklet: TrackletId,
    pub bbox: BBox<T>,
    pub confidence: T,
    pub present: bool,
    pub det_id: u64,
    pub object_id: Option<i64>,
}

/// Incrementally maintained DP table.
#[derive(Debug, Clone)]
pub struct ThetaTable<T: Scalar> {
    theta: Vec<T>,
    pred: Vec<Option<TrackletId>>,
    pred_term: Vec<T>,
    unary: Vec<T>,
    scored_len: Vec<usize>,
    scanned: Vec<bool>,
    version: Vec<u32>,
    heap: BinaryHeap<Ranked<T>>,
    ff_id: Option<TrackletId>,
    last_writes: usize,
    last_candidates: usize,
    total_writes: u64,
}

impl<T: Scalar> Default for ThetaTable<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ThetaTable<T> {
    pub fn new() -> Self {
        ThetaTable {
            theta: Vec::new(),
            pred: Vec::new(),
            pred_term: Vec::new(),
            unary: Vec::new(),
            scored_len: Vec::new(),
            scanned: Vec::new(),
            version: Vec::new(),
            heap: BinaryHeap::new(),
            ff_id: None,
            last_writes: 0,
            last_candidates: 0,
            total_writes: 0,
        }
    }

    /// Sets up the table for a freshly initialized store.
    pub fn init(&mut self, store: &TrackletStore<T>, params: &DpParams<T>) -> Result<()> {
        let ff = store.ff_id().ok_or(Error::NotInitialized)?;
        *self = Self::new();
        self.ff_id = Some(ff);
        self.grow(store.len());
        self.recompute(ff, store, params);
        Ok(())
    }

    fn grow(&mut self, n: usize) {
        let ninf = T::neg_infinity();
        while self.theta.len() < n {
            self.theta.push(ninf);
            self.pred.push(None);
            self.pred_term.push(ninf);
            self.unary.push(T::zero());
            self.scored_len.push(0);
            self.scanned.push(false);
            self.version.push(0);
        }
    }

    /// Recomputes theta for the tracklets extended or created in `update`.
    pub fn update_theta(&mut self, update: &FrameUpdate<T>, store: &TrackletStore<T>, params: &DpParams<T>) {
        self.grow(store.len());
        self.last_writes = 0;
        self.last_candidates = 0;
        for id in update.changed() {
            self.recompute(id, store, params);
        }
    }

    fn recompute(&mut self, id: TrackletId, store: &TrackletStore<T>, params: &DpParams<T>) {
        let tr = store.get(id);
        // Fold in detections appended since the last visit.
        let mut u = self.unary[id];
        for d in &tr.detections[self.scored_len[id]..] {
            u += d.unary_term(params.w_ff);
        }
        self.unary[id] = u;
        self.scored_len[id] = tr.len();

        let theta = if Some(id) == self.ff_id {
            T::zero()
        } else {
            if !self.scanned[id] {
                self.scan_predecessors(id, tr, store, params);
                self.scanned[id] = true;
            }
            u + self.pred_term[id]
        };
        self.theta[id] = theta;
        self.version[id] = self.version[id].wrapping_add(1);
        self.heap.push(Ranked {
            theta,
            is_ff: tr.is_ff,
            id,
            version: self.version[id],
        });
        self.last_writes += 1;
        self.total_writes += 1;
    }

    fn scan_predecessors(&mut self, id: TrackletId, tr: &Tracklet<T>, store: &TrackletStore<T>, params: &DpParams<T>) {
        let start = tr.start();
        if start == 0 {
            return;
        }
        let lo = start.saturating_sub(params.max_gap);
        let mut best: Option<(T, bool, TrackletId)> = None;
        let candidates = store.frozen_ending_within(lo, start - 1);
        self.last_candidates += candidates.len();
        for &p in candidates {
            let prev = store.get(p);
            let term = self.theta[p] + params.w_loc * loc_score_boxes(&prev.last().bbox, &tr.first().bbox);
            let cand = (term, prev.is_ff, p);
            if best.is_none_or(|b| ranks_above(cand, b)) {
                best = Some(cand);
            }
        }
        if let Some((term, _, p)) = best {
            self.pred_term[id] = term;
            self.pred[id] = if term == T::neg_infinity() { None } else { Some(p) };
        }
    }

    pub fn theta(&self, id: TrackletId) -> T {
        self.theta[id]
    }

    pub fn thetas(&self) -> &[T] {
        &self.theta
    }

    pub fn pred(&self, id: TrackletId) -> Option<TrackletId> {
        self.pred[id]
    }

    /// Theta writes performed by the last `update_theta` call.
    pub fn last_writes(&self) -> usize {
        self.last_writes
    }

    /// Predecessor candidates inspected by the last `update_theta` call.
    pub fn last_candidates(&self) -> usize {
        self.last_candidates
    }

    pub fn total_writes(&self) -> u64 {
        self.total_writes
    }

    /// The tracklet with the highest theta.
    pub fn best(&mut self) -> Option<TrackletId> {
        while let Some(top) = self.heap.peek() {
            if top.version == self.version[top.id] {
                return Some(top.id);
            }
            self.heap.pop();
        }
        None
    }

    /// Output box for frame `t`: the current detection of the best tracklet,
    /// or its most recent box with confidence 0 when it has none at `t`.
    pub fn select_output(&mut self, store: &TrackletStore<T>, t: Frame, w_ff: T) -> Result<Selection<T>> {
        let best = self.best().ok_or(Error::NotInitialized)?;
        let tr = store.get(best);
        Ok(match tr.at(t) {
            Some(d) => Selection {
                tracklet: best,
                bbox: d.bbox,
                confidence: d.unary_term(w_ff),
                present: true,
                det_id: d.det_id,
                object_id: d.object_id,
            },
            None => {
                let d = tr.last();
                Selection {
                    tracklet: best,
                    bbox: d.bbox,
                    confidence: T::zero(),
                    present: false,
                    det_id: d.det_id,
                    object_id: d.object_id,
                }
            }
        })
    }

    /// Chain of tracklets from the first-frame tracklet to the current best.
    pub fn reconstruct_track(&mut self, store: &TrackletStore<T>) -> Vec<TrackletId> {
        let Some(mut cur) = self.best() else {
            return Vec::new();
        };
        let mut chain = vec![cur];
        while let Some(p) = self.pred[cur] {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        debug_assert!(chain.first().is_none_or(|&f| store.get(f).is_ff));
        chain
    }
}

/// Score of an explicit tracklet chain, accumulated exactly like the table.
pub fn chain_score<T: Scalar>(chain: &[&Tracklet<T>], params: &DpParams<T>) -> T {
    let mut acc = T::zero();
    for pair in chain.windows(2) {
        let (prev, cur) = (pair[0], pair[1]);
        acc = unary(cur, params.w_ff) + (acc + params.w_loc * loc_score_boxes(&prev.last().bbox, &cur.first().bbox));
    }
    acc
}
