//! Tracking evaluation: success AUC, center precision, long-term
//! precision/recall/F, MaxGM over presence decisions, reset-based
//! accuracy/robustness and (for synthetic streams) identity accuracy.

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Frame};
use crate::error::{Error, Result};
use crate::geometry::{iou, PixelBox, BBox};
use crate::scalar::{cmp_scalar, Scalar};
use crate::tracker::{FrameOutput, OnlineTracker};

/// One reported frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord<T> {
    pub t: Frame,
    pub bbox: BBox<T>,
    pub confidence: T,
    pub present: bool,
    /// Identity of the selected detection, when known.
    pub object_id: Option<i64>,
}

impl<T: Scalar> From<FrameOutput<T>> for PredictionRecord<T> {
    fn from(o: FrameOutput<T>) -> Self {
        PredictionRecord {
            t: o.t,
            bbox: o.bbox,
            confidence: o.confidence,
            present: o.present,
            object_id: o.object_id,
        }
    }
}

fn check_len<T, U>(preds: &[T], truth: &[U]) -> Result<()> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Overlap thresholds `0.00, 0.01, ..., 1.00`.
pub fn overlap_thresholds<T: Scalar>() -> impl Iterator<Item = T> {
    (0..=100).map(|k| T::of(k as f64 / 100.0))
}

fn present_ious<T: Scalar>(preds: &[PredictionRecord<T>], truth: &[Option<BBox<T>>]) -> Result<Vec<T>> {
    check_len(preds, truth)?;
    let ious: Vec<T> = preds
        .iter()
        .zip(truth)
        .filter_map(|(p, g)| g.as_ref().map(|g| iou(&p.bbox, g)))
        .collect();
    if ious.is_empty() {
        return Err(Error::Undefined("no frame with the target present".into()));
    }
    Ok(ious)
}

/// Success rate (`IoU > tau`) for every overlap threshold, over truth-present frames.
pub fn success_curve<T: Scalar>(preds: &[PredictionRecord<T>], truth: &[Option<BBox<T>>]) -> Result<Vec<(T, T)>> {
    let ious = present_ious(preds, truth)?;
    let n = T::of(ious.len() as f64);
    Ok(overlap_thresholds::<T>()
        .map(|tau| {
            let hits = ious.iter().filter(|&&v| v > tau).count();
            (tau, T::of(hits as f64) / n)
        })
        .collect())
}

/// Area under the success curve (mean over the 101 thresholds).
pub fn success_auc<T: Scalar>(preds: &[PredictionRecord<T>], truth: &[Option<BBox<T>>]) -> Result<T> {
    let curve = success_curve(preds, truth)?;
    let n = T::of(curve.len() as f64);
    Ok(curve.iter().fold(T::zero(), |acc, &(_, s)| acc + s) / n)
}

/// Center-distance precision curve over `0..=max_px` pixel thresholds.
pub fn precision_curve<T: Scalar>(
    preds: &[PredictionRecord<T>],
    truth: &[Option<BBox<T>>],
    frame_w: T,
    frame_h: T,
    max_px: usize,
) -> Result<Vec<(T, T)>> {
    check_len(preds, truth)?;
    if !(frame_w > T::zero() && frame_h > T::zero() && frame_w.is_finite() && frame_h.is_finite()) {
        return Err(Error::InvalidParam("precision needs positive frame dimensions".into()));
    }
    let dists: Vec<T> = preds
        .iter()
        .zip(truth)
        .filter_map(|(p, g)| {
            let g = g.as_ref()?;
            let (px, py) = PixelBox::from_bbox(&p.bbox, frame_w, frame_h).center();
            let (gx, gy) = PixelBox::from_bbox(g, frame_w, frame_h).center();
            Some(((px - gx) * (px - gx) + (py - gy) * (py - gy)).sqrt())
        })
        .collect();
    if dists.is_empty() {
        return Err(Error::Undefined("no frame with the target present".into()));
    }
    let n = T::of(dists.len() as f64);
    Ok((0..=max_px)
        .map(|px| {
            let th = T::of(px as f64);
            (th, T::of(dists.iter().filter(|&&d| d <= th).count() as f64) / n)
        })
        .collect())
}

/// Fraction of truth-present frames whose center error is at most 20 px.
pub fn precision_at_20px<T: Scalar>(
    preds: &[PredictionRecord<T>],
    truth: &[Option<BBox<T>>],
    frame_w: T,
    frame_h: T,
) -> Result<T> {
    Ok(precision_curve(preds, truth, frame_w, frame_h, 20)?[20].1)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_score<T: Scalar>(pr: T, re: T) -> T {
    let s = pr + re;
    if s <= T::zero() {
        T::zero()
    } else {
        T::of(2.0) * pr * re / s
    }
}

pub fn geometric_mean<T: Scalar>(tpr: T, tnr: T) -> T {
    (tpr * tnr).sqrt()
}

/// Long-term precision/recall at one confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrRePoint<T> {
    pub threshold: T,
    pub pr: T,
    pub re: T,
    pub f: T,
}

/// Reported frames sorted by descending confidence, paired with their IoU
/// against the truth (0 where the target is absent).
fn reported_by_confidence<T: Scalar>(preds: &[PredictionRecord<T>], truth: &[Option<BBox<T>>]) -> Vec<(T, T)> {
    let mut rep: Vec<(T, T)> = preds
        .iter()
        .zip(truth)
        .filter(|(p, _)| p.present)
        .map(|(p, g)| (p.confidence, g.as_ref().map_or(T::zero(), |g| iou(&p.bbox, g))))
        .collect();
    rep.sort_by(|a, b| cmp_scalar(b.0, a.0));
    rep
}

/// Precision/recall/F for every distinct reported confidence, highest first.
///
/// Precision is the mean IoU over frames reported present with confidence
/// `>= tau`; recall is the summed IoU of those frames over the number of
/// truth-present frames.
pub fn longterm_curve<T: Scalar>(preds: &[PredictionRecord<T>], truth: &[Option<BBox<T>>]) -> Result<Vec<PrRePoint<T>>> {
    check_len(preds, truth)?;
    let n_present = truth.iter().filter(|g| g.is_some()).count();
    if n_present == 0 {
        return Err(Error::Undefined("recall needs at least one frame with the target present".into()));
    }
    let rep = reported_by_confidence(preds, truth);
    let mut out = Vec::new();
    let (mut sum, mut count) = (T::zero(), 0usize);
    let mut k = 0;
    while k < rep.len() {
        let tau = rep[k].0;
        while k < rep.len() && rep[k].0 == tau {
            sum += rep[k].1;
            count += 1;
            k += 1;
        }
        let pr = sum / T::of(count as f64);
        let re = sum / T::of(n_present as f64);
        out.push(PrRePoint { threshold: tau, pr, re, f: f_score(pr, re) });
    }
    Ok(out)
}

/// Maximum F over all thresholds, with the precision and recall where it is attained.
pub fn longterm_f<T: Scalar>(preds: &[PredictionRecord<T>], truth: &[Option<BBox<T>>]) -> Result<PrRePoint<T>> {
    let curve = longterm_curve(preds, truth)?;
    let none = PrRePoint {
        threshold: T::infinity(),
        pr: T::zero(),
        re: T::zero(),
        f: T::zero(),
    };
    Ok(curve.into_iter().fold(none, |best, p| if p.f > best.f { p } else { best }))
}

/// Presence-decision rates at one confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmPoint<T> {
    pub threshold: T,
    pub tpr: T,
    pub tnr: T,
    pub gm: T,
}

/// TPR/TNR for every distinct reported confidence plus the reject-all
/// threshold `+inf`. A frame counts as a true positive when the target is
/// present, reported present with confidence `>= tau`, and IoU `> 0.5`.
pub fn gm_curve<T: Scalar>(preds: &[PredictionRecord<T>], truth: &[Option<BBox<T>>]) -> Result<Vec<GmPoint<T>>> {
    check_len(preds, truth)?;
    let n_pos = truth.iter().filter(|g| g.is_some()).count();
    let n_neg = truth.len() - n_pos;
    if n_neg == 0 {
        return Err(Error::Undefined(
            "TNR needs frames where the target is absent; use longterm_f or success_auc for always-present sequences".into(),
        ));
    }
    if n_pos == 0 {
        return Err(Error::Undefined("TPR needs frames where the target is present".into()));
    }
    let half = T::of(0.5);
    // (confidence, is true positive, is false positive on an absent frame)
    let mut rep: Vec<(T, bool, bool)> = preds
        .iter()
        .zip(truth)
        .filter(|(p, _)| p.present)
        .map(|(p, g)| match g {
            Some(g) => (p.confidence, iou(&p.bbox, g) > half, false),
            None => (p.confidence, false, true),
        })
        .collect();
    rep.sort_by(|a, b| cmp_scalar(b.0, a.0));
    let (pos, neg) = (T::of(n_pos as f64), T::of(n_neg as f64));
    let point = |tau: T, tp: usize, fp: usize| {
        let tpr = T::of(tp as f64) / pos;
        let tnr = T::of((n_neg - fp) as f64) / neg;
        GmPoint { threshold: tau, tpr, tnr, gm: geometric_mean(tpr, tnr) }
    };
    let mut out = vec![point(T::infinity(), 0, 0)];
    let (mut tp, mut fp, mut k) = (0, 0, 0);
    while k < rep.len() {
        let tau = rep[k].0;
        while k < rep.len() && rep[k].0 == tau {
            tp += rep[k].1 as usize;
            fp += rep[k].2 as usize;
            k += 1;
        }
        out.push(point(tau, tp, fp));
    }
    Ok(out)
}

/// Maximum geometric mean of TPR and TNR over thresholds.
pub fn max_gm<T: Scalar>(preds: &[PredictionRecord<T>], truth: &[Option<BBox<T>>]) -> Result<GmPoint<T>> {
    let curve = gm_curve(preds, truth)?;
    let mut best = curve[0];
    for p in &curve[1..] {
        if p.gm > best.gm {
            best = *p;
        }
    }
    Ok(best)
}

/// Identity of the reported detection on frames reported present.
pub fn selected_ids<T: Scalar>(preds: &[PredictionRecord<T>]) -> Vec<Option<i64>> {
    preds.iter().map(|p| if p.present { p.object_id } else { None }).collect()
}

/// Fraction of truth-present frames whose selected detection carries the target id.
pub fn identity_accuracy<T: Scalar>(selected: &[Option<i64>], truth_ids: &[Option<i64>]) -> Result<T> {
    check_len(selected, truth_ids)?;
    let present = truth_ids.iter().filter(|g| g.is_some()).count();
    if present == 0 {
        return Err(Error::Undefined("no frame with the target present".into()));
    }
    let hits = selected
        .iter()
        .zip(truth_ids)
        .filter(|(s, g)| g.is_some() && s == g)
        .count();
    Ok(T::of(hits as f64) / T::of(present as f64))
}

/// Reset protocol constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResetProtocol {
    /// Frames skipped after a failure before re-initializing.
    pub skip: usize,
    /// Frames after each (re)initialization excluded from accuracy.
    pub burn_in: usize,
}

impl Default for ResetProtocol {
    fn default() -> Self {
        ResetProtocol { skip: 5, burn_in: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResetReport<T> {
    pub resets: usize,
    /// Mean IoU over counted frames; `None` if no frame was counted.
    pub accuracy: Option<T>,
    pub counted_frames: usize,
    pub failure_frames: Vec<Frame>,
}

/// Runs `tracker` with re-initialization from ground truth after every
/// zero-overlap frame. Frames without a ground-truth box are tracked but
/// neither judged nor counted; failure frames are not counted either.
pub fn reset_based_eval<T: Scalar, R: OnlineTracker<T> + ?Sized>(
    tracker: &mut R,
    stream: &[Vec<Detection<T>>],
    truth: &[Option<BBox<T>>],
    protocol: ResetProtocol,
) -> Result<ResetReport<T>> {
    check_len(stream, truth)?;
    let mut report = ResetReport {
        resets: 0,
        accuracy: None,
        counted_frames: 0,
        failure_frames: Vec::new(),
    };
    let first_present = |from: usize| (from..truth.len()).find(|&t| truth[t].is_some());
    let Some(mut t) = first_present(0) else {
        return Ok(report);
    };
    tracker.initialize(t, truth[t].expect("present"), &stream[t])?;
    let mut since_init = 0usize;
    let mut sum = T::zero();
    t += 1;
    while t < stream.len() {
        let out = tracker.track(t, &stream[t])?;
        since_init += 1;
        if let Some(gt) = truth[t] {
            let ov = iou(&out.bbox, &gt);
            if ov <= T::zero() {
                report.resets += 1;
                report.failure_frames.push(t);
                let Some(re) = first_present(t + protocol.skip) else {
                    break;
                };
                tracker.initialize(re, truth[re].expect("present"), &stream[re])?;
                since_init = 0;
                t = re + 1;
                continue;
            }
            if since_init > protocol.burn_in {
                sum += ov;
                report.counted_frames += 1;
            }
        }
        t += 1;
    }
    if report.counted_frames > 0 {
        report.accuracy = Some(sum / T::of(report.counted_frames as f64));
    }
    Ok(report)
}

/// Metric summary for one sequence. Metrics that are undefined for the
/// sequence (e.g. TNR without absent frames) are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub success_auc: Option<f64>,
    pub precision_at_20px: Option<f64>,
    pub f_max: Option<f64>,
    pub pr_at_fmax: Option<f64>,
    pub re_at_fmax: Option<f64>,
    pub max_gm: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub resets: Option<usize>,
    pub reset_accuracy: Option<f64>,
    pub identity_accuracy: Option<f64>,
}

impl EvalReport {
    /// Computes every metric that is defined for `preds` against `truth`.
    /// Identity accuracy is filled in when `truth_ids` is given.
    pub fn from_predictions<T: Scalar>(
        preds: &[PredictionRecord<T>],
        truth: &[Option<BBox<T>>],
        frame_w: T,
        frame_h: T,
        truth_ids: Option<&[Option<i64>]>,
    ) -> Result<Self> {
        check_len(preds, truth)?;
        let f = |v: T| Some(v.as_f64());
        let mut r = EvalReport {
            success_auc: success_auc(preds, truth).ok().and_then(f),
            precision_at_20px: precision_at_20px(preds, truth, frame_w, frame_h).ok().and_then(f),
            ..EvalReport::default()
        };
        if let Ok(p) = longterm_f(preds, truth) {
            r.f_max = f(p.f);
            r.pr_at_fmax = f(p.pr);
            r.re_at_fmax = f(p.re);
        }
        if let Ok(g) = max_gm(preds, truth) {
            r.max_gm = f(g.gm);
            r.tpr = f(g.tpr);
            r.tnr = f(g.tnr);
        }
        if let Some(ids) = truth_ids {
            r.identity_accuracy = identity_accuracy::<T>(&selected_ids(preds), ids).ok().and_then(f);
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64) -> BBox<f64> {
        BBox::new(x, 0.5, 0.2, 0.2).unwrap()
    }

    fn rec(t: Frame, x: f64, conf: f64, present: bool) -> PredictionRecord<f64> {
        PredictionRecord { t, bbox: bx(x), confidence: conf, present, object_id: None }
    }

    #[test]
    fn perfect_and_disjoint_auc() {
        let truth: Vec<_> = (0..10).map(|_| Some(bx(0.5))).collect();
        let perfect: Vec<_> = (0..10).map(|t| rec(t, 0.5, 1.0, true)).collect();
        assert!(success_auc(&perfect, &truth).unwrap() >= 0.99);
        let off: Vec<_> = (0..10).map(|t| rec(t, 0.9, 1.0, true)).collect();
        assert!(success_auc(&off, &truth).unwrap() <= 0.01);
        assert!(matches!(success_auc(&perfect[..3], &truth), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn precision_examples() {
        let truth: Vec<_> = (0..4).map(|_| Some(bx(0.5))).collect();
        let exact: Vec<_> = (0..4).map(|t| rec(t, 0.5, 1.0, true)).collect();
        assert_eq!(precision_at_20px(&exact, &truth, 100.0, 100.0).unwrap(), 1.0);
        // 0.25 of a 100 px frame is 25 px everywhere
        let off: Vec<_> = (0..4).map(|t| rec(t, 0.75, 1.0, true)).collect();
        assert_eq!(precision_at_20px(&off, &truth, 100.0, 100.0).unwrap(), 0.0);
        // offsets of 10, 20, 21, 30 px: two within 20 px
        let mixed: Vec<_> = [0.6, 0.7, 0.71, 0.8].iter().enumerate().map(|(t, &x)| rec(t, x, 1.0, true)).collect();
        let truth_l: Vec<_> = (0..4).map(|_| Some(bx(0.5))).collect();
        assert_eq!(precision_at_20px(&mixed, &truth_l, 100.0, 100.0).unwrap(), 0.5);
        assert!(precision_at_20px(&exact, &truth, 0.0, 100.0).is_err());
    }

    #[test]
    fn f_score_examples() {
        assert_eq!(f_score(0.5, 0.5), 0.5);
        assert_eq!(f_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_longterm_tracker() {
        let truth = vec![Some(bx(0.5)), None, Some(bx(0.5)), None];
        let preds = vec![rec(0, 0.5, 0.9, true), rec(1, 0.5, 0.0, false), rec(2, 0.5, 0.8, true), rec(3, 0.5, 0.0, false)];
        let p = longterm_f(&preds, &truth).unwrap();
        assert_eq!((p.f, p.pr, p.re), (1.0, 1.0, 1.0));
        let g = max_gm(&preds, &truth).unwrap();
        assert_eq!((g.gm, g.tpr, g.tnr), (1.0, 1.0, 1.0));
    }

    #[test]
    fn max_gm_needs_absent_frames() {
        let truth = vec![Some(bx(0.5))];
        let preds = vec![rec(0, 0.5, 0.9, true)];
        assert!(matches!(max_gm(&preds, &truth), Err(Error::Undefined(_))));
        assert!(longterm_f(&[rec(0, 0.5, 0.0, false)], &[None]).is_err());
    }

    #[test]
    fn identity_accuracy_examples() {
        let truth = vec![Some(1), Some(1), None, Some(1), Some(1)];
        let sel = vec![Some(1), Some(2), Some(2), Some(2), Some(1)];
        assert_eq!(identity_accuracy::<f64>(&sel, &truth).unwrap(), 0.5);
        assert_eq!(identity_accuracy::<f64>(&truth, &truth).unwrap(), 1.0);
    }

    struct Fixed(BBox<f64>);
    impl OnlineTracker<f64> for Fixed {
        fn initialize(&mut self, t: Frame, bbox: BBox<f64>, _: &[Detection<f64>]) -> Result<FrameOutput<f64>> {
            Ok(FrameOutput { t, bbox, confidence: 1.0, present: true, det_id: None, object_id: None })
        }
        fn track(&mut self, t: Frame, _: &[Detection<f64>]) -> Result<FrameOutput<f64>> {
            Ok(FrameOutput { t, bbox: self.0, confidence: 1.0, present: true, det_id: None, object_id: None })
        }
    }

    #[test]
    fn fixed_disjoint_box_fails_after_every_init() {
        let n = 30;
        let stream = vec![Vec::new(); n];
        let truth: Vec<_> = (0..n).map(|_| Some(bx(0.3))).collect();
        let r = reset_based_eval(&mut Fixed(bx(0.9)), &stream, &truth, ResetProtocol::default()).unwrap();
        // init 0, fail 1, init 6, fail 7, ...
        assert_eq!(r.failure_frames, vec![1, 7, 13, 19, 25]);
        assert_eq!(r.accuracy, None);
    }

    #[test]
    fn perfect_fixed_tracker_never_resets() {
        let n = 30;
        let stream = vec![Vec::new(); n];
        let truth: Vec<_> = (0..n).map(|_| Some(bx(0.3))).collect();
        let r = reset_based_eval(&mut Fixed(bx(0.3)), &stream, &truth, ResetProtocol::default()).unwrap();
        assert_eq!(r.resets, 0);
        assert_eq!(r.counted_frames, n - 11);
        assert!(r.accuracy.unwrap() >= 0.99);
    }
}
