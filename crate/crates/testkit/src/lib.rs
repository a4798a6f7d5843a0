//! Slow, obviously-correct reference implementations and random instance
//! generators shared by the integration and acceptance tests.
//!
//! Nothing here calls into the optimized code paths it is meant to check:
//! scores, distances and sweeps are recomputed from the raw inputs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdpa_core::dp::DpParams;
use tdpa_core::metrics::PredictionRecord;
use tdpa_core::miner::{DistanceMetric, Gallery, GalleryEntry};
use tdpa_core::oracle::{OracleKind, SimilarityOracle};
use tdpa_core::short_term::ShortTermParams;
use tdpa_core::simulator::{DetectorNoise, ObjectSpec, ScenarioSpec, Waypoint};
use tdpa_core::tracklet::{BuilderParams, MatchDecision, Tracklet};
use tdpa_core::{BBox, Detection};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- geometry

/// IoU computed from explicit corner coordinates.
pub fn corner_iou(a: &BBox<f64>, b: &BBox<f64>) -> f64 {
    let ax = (a.x - a.w / 2.0, a.x + a.w / 2.0);
    let ay = (a.y - a.h / 2.0, a.y + a.h / 2.0);
    let bx = (b.x - b.w / 2.0, b.x + b.w / 2.0);
    let by = (b.y - b.h / 2.0, b.y + b.h / 2.0);
    let ix = (ax.1.min(bx.1) - ax.0.max(bx.0)).max(0.0);
    let iy = (ay.1.min(by.1) - ay.0.max(by.0)).max(0.0);
    let inter = ix * iy;
    let ua = a.w * a.h + b.w * b.h - inter;
    if a.w * a.h <= 0.0 || b.w * b.h <= 0.0 || ua <= 0.0 {
        0.0
    } else {
        inter / ua
    }
}

/// Largest per-component absolute difference.
pub fn max_component_distance(a: &BBox<f64>, b: &BBox<f64>) -> f64 {
    let d = [a.x - b.x, a.y - b.y, a.w - b.w, a.h - b.h];
    d.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

pub fn sum_component_distance(a: &BBox<f64>, b: &BBox<f64>) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs() + (a.w - b.w).abs() + (a.h - b.h).abs()
}

// ---------------------------------------------------------------- DP

/// Unary of a tracklet, accumulated left to right from zero.
pub fn ref_unary(tr: &Tracklet<f64>, w_ff: f64) -> f64 {
    let mut acc = 0.0;
    for d in &tr.detections {
        acc += w_ff * d.ff_score + (1.0 - w_ff) * d.ff_tracklet_score;
    }
    acc
}

fn admissible(p: &Tracklet<f64>, a: &Tracklet<f64>, max_gap: usize) -> bool {
    p.end() < a.start() && a.start() - p.end() <= max_gap
}

/// Best track score ending in each tracklet, found by enumerating every
/// chain that starts at the first-frame tracklet. Exponential; keep
/// instances small.
pub fn brute_force_theta(tracklets: &[Tracklet<f64>], params: &DpParams<f64>) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; tracklets.len()];
    let Some(ff) = tracklets.iter().position(|t| t.is_ff) else {
        return best;
    };
    fn walk(
        cur: usize,
        score: f64,
        tracklets: &[Tracklet<f64>],
        params: &DpParams<f64>,
        best: &mut [f64],
    ) {
        if score > best[cur] {
            best[cur] = score;
        }
        for (next, tr) in tracklets.iter().enumerate() {
            if tr.is_ff || !admissible(&tracklets[cur], tr, params.max_gap) {
                continue;
            }
            let loc = -sum_component_distance(&tracklets[cur].last().bbox, &tr.first().bbox);
            let s = ref_unary(tr, params.w_ff) + (score + params.w_loc * loc);
            walk(next, s, tracklets, params, best);
        }
    }
    walk(ff, 0.0, tracklets, params, &mut best);
    best
}

/// Theta for every tracklet, recomputed from scratch in order of start frame.
pub fn theta_from_scratch(tracklets: &[Tracklet<f64>], params: &DpParams<f64>) -> Vec<f64> {
    let mut order: Vec<usize> = (0..tracklets.len()).collect();
    order.sort_by_key(|&i| (tracklets[i].start(), i));
    let mut theta = vec![f64::NEG_INFINITY; tracklets.len()];
    for &a in &order {
        let tr = &tracklets[a];
        if tr.is_ff {
            theta[a] = 0.0;
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for (p, prev) in tracklets.iter().enumerate() {
            if !admissible(prev, tr, params.max_gap) {
                continue;
            }
            let loc = -sum_component_distance(&prev.last().bbox, &tr.first().bbox);
            best = best.max(theta[p] + params.w_loc * loc);
        }
        theta[a] = ref_unary(tr, params.w_ff) + best;
    }
    theta
}

// ---------------------------------------------------------------- builder

/// Re-derives one frame of linking decisions from the raw score matrix
/// (`scores[i][j]`: current detection `i` vs previous detection `j`) and
/// checks them against what the builder reported. Returns a description of
/// the first disagreement.
pub fn check_builder_decisions(
    scores: &[Vec<f64>],
    prev_ids: &[u64],
    decisions: &[MatchDecision<f64>],
    params: &BuilderParams<f64>,
) -> Result<(), String> {
    if decisions.len() != scores.len() {
        return Err(format!("{} decisions for {} detections", decisions.len(), scores.len()));
    }
    let mut claimed = vec![false; prev_ids.len()];
    for (i, dec) in decisions.iter().enumerate() {
        let row = &scores[i];
        let mut best: Option<usize> = None;
        for j in 0..row.len() {
            best = match best {
                None => Some(j),
                Some(b) if row[j] > row[b] || (row[j] == row[b] && prev_ids[j] < prev_ids[b]) => Some(j),
                keep => keep,
            };
        }
        let Some(b) = best else {
            if dec.extended {
                return Err(format!("detection {i} extended with no previous detections"));
            }
            continue;
        };
        let s1 = row[b];
        let mut s2 = f64::NEG_INFINITY;
        for (k, other) in scores.iter().enumerate() {
            if k != i {
                s2 = s2.max(other[b]);
            }
        }
        let mut s3 = f64::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if j != b {
                s3 = s3.max(v);
            }
        }
        if dec.best_prev != Some(b) {
            return Err(format!("detection {i}: best previous {:?}, expected {b}", dec.best_prev));
        }
        let same = |x: f64, y: f64| x == y || (x - y).abs() < 1e-12;
        if !same(dec.s1, s1) || !same(dec.s2, s2) || !same(dec.s3, s3) {
            return Err(format!(
                "detection {i}: (s1,s2,s3)=({},{},{}), expected ({s1},{s2},{s3})",
                dec.s1, dec.s2, dec.s3
            ));
        }
        let accept = s1 > params.alpha && s2 <= s1 - params.beta && s3 <= s1 - params.beta;
        // A previous detection's tracklet takes at most one detection per frame.
        let expected = accept && !claimed[b];
        if expected {
            claimed[b] = true;
        }
        if dec.extended != expected {
            return Err(format!("detection {i}: extended={}, expected {expected}", dec.extended));
        }
    }
    Ok(())
}

/// Raw gated score matrix, computed pair by pair.
pub fn gated_scores(
    oracle: &OracleKind<f64>,
    cur: &[Detection<f64>],
    prev: &[Detection<f64>],
    gamma: f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    cur.iter()
        .map(|d| {
            prev.iter()
                .map(|p| {
                    if max_component_distance(&d.bbox, &p.bbox) > gamma {
                        f64::NEG_INFINITY
                    } else {
                        oracle.score(d, p, seed).unwrap()
                    }
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------- short-term

/// Index and score of the best candidate, scoring every candidate in full.
pub fn dense_short_term(
    prev: &Detection<f64>,
    candidates: &[Detection<f64>],
    ff: &Detection<f64>,
    oracle: &OracleKind<f64>,
    params: &ShortTermParams<f64>,
    seed: u64,
) -> Option<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| max_component_distance(&c.bbox, &prev.bbox) <= params.xi)
        .map(|(k, c)| {
            let s = oracle.score(c, ff, seed).unwrap()
                + oracle.score(c, prev, seed).unwrap()
                + params.delta * sum_component_distance(&c.bbox, &prev.bbox);
            (k, s)
        })
        .collect();
    // Stable sort: among equal scores the earliest candidate stays first.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    scored.first().copied()
}

// ---------------------------------------------------------------- metrics

fn reported(p: &PredictionRecord<f64>, tau: f64) -> bool {
    p.present && p.confidence >= tau
}

/// Max F over thresholds, each threshold evaluated from scratch.
/// Returns `(f, pr, re)`.
pub fn brute_longterm_f(preds: &[PredictionRecord<f64>], truth: &[Option<BBox<f64>>]) -> (f64, f64, f64) {
    let n_present = truth.iter().filter(|g| g.is_some()).count() as f64;
    let mut best = (0.0, 0.0, 0.0);
    for tau in preds.iter().filter(|p| p.present).map(|p| p.confidence) {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut re_sum = 0.0;
        for (p, g) in preds.iter().zip(truth) {
            if !reported(p, tau) {
                continue;
            }
            count += 1;
            if let Some(g) = g {
                let o = corner_iou(&p.bbox, g);
                sum += o;
                re_sum += o;
            }
        }
        let pr = sum / count as f64;
        let re = re_sum / n_present;
        let f = if pr + re > 0.0 { 2.0 * pr * re / (pr + re) } else { 0.0 };
        if f > best.0 {
            best = (f, pr, re);
        }
    }
    best
}

/// Max geometric mean of TPR and TNR, each threshold evaluated from scratch.
pub fn brute_max_gm(preds: &[PredictionRecord<f64>], truth: &[Option<BBox<f64>>]) -> f64 {
    let pos = truth.iter().filter(|g| g.is_some()).count() as f64;
    let neg = truth.len() as f64 - pos;
    let mut taus: Vec<f64> = preds.iter().filter(|p| p.present).map(|p| p.confidence).collect();
    taus.push(f64::INFINITY);
    let mut best = 0.0f64;
    for tau in taus {
        let mut tp = 0.0;
        let mut tn = 0.0;
        for (p, g) in preds.iter().zip(truth) {
            match g {
                Some(g) => {
                    if reported(p, tau) && corner_iou(&p.bbox, g) > 0.5 {
                        tp += 1.0;
                    }
                }
                None => {
                    if !reported(p, tau) {
                        tn += 1.0;
                    }
                }
            }
        }
        best = best.max(((tp / pos) * (tn / neg)).sqrt());
    }
    best
}

/// Mean over `tau = 0, 0.01, ..., 1` of the fraction of present frames with IoU > tau.
pub fn brute_success_auc(preds: &[PredictionRecord<f64>], truth: &[Option<BBox<f64>>]) -> f64 {
    let ious: Vec<f64> = preds
        .iter()
        .zip(truth)
        .filter_map(|(p, g)| g.as_ref().map(|g| corner_iou(&p.bbox, g)))
        .collect();
    let mut total = 0.0;
    for k in 0..=100 {
        let tau = k as f64 / 100.0;
        total += ious.iter().filter(|&&v| v > tau).count() as f64 / ious.len() as f64;
    }
    total / 101.0
}

// ---------------------------------------------------------------- miner

/// Entry ids of the `k` nearest entries, by full sort on `(distance, entry_id)`.
pub fn full_sort_knn(gallery: &Gallery<f64>, query: &[f64], k: usize, exclude_video: Option<i64>) -> Vec<u64> {
    let mut all: Vec<(f64, u64)> = gallery
        .entries()
        .iter()
        .filter(|e| Some(e.video_id) != exclude_video)
        .map(|e| {
            let d = match gallery.metric() {
                DistanceMetric::Euclidean => e
                    .embedding
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                DistanceMetric::Cosine => {
                    let dot: f64 = e.embedding.iter().zip(query).map(|(a, b)| a * b).sum();
                    let na: f64 = e.embedding.iter().map(|a| a * a).sum::<f64>().sqrt();
                    let nb: f64 = query.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if na == 0.0 || nb == 0.0 {
                        1.0
                    } else {
                        1.0 - (dot / (na * nb)).clamp(-1.0, 1.0)
                    }
                }
            };
            (d, e.entry_id)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(_, id)| id).collect()
}

// ---------------------------------------------------------------- generators

pub fn random_box(r: &mut impl Rng) -> BBox<f64> {
    BBox::new(
        r.random_range(0.1..0.9),
        r.random_range(0.1..0.9),
        r.random_range(0.05..0.2),
        r.random_range(0.05..0.2),
    )
    .unwrap()
}

/// Random embedding gallery: `n_videos` videos with `per_video` entries
/// each, spread over a few frames, embeddings clustered per video.
pub fn random_gallery(seed: u64, n_videos: usize, per_video: usize, dim: usize) -> Gallery<f64> {
    let mut r = rng(seed);
    let mut entries = Vec::with_capacity(n_videos * per_video);
    for v in 0..n_videos {
        let center: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        for k in 0..per_video {
            entries.push(GalleryEntry {
                video_id: v as i64,
                frame: k / 2,
                bbox: random_box(&mut r),
                embedding: center.iter().map(|c| c + r.random_range(-0.3..0.3)).collect(),
                entry_id: entries.len() as u64,
            });
        }
    }
    let mut ids: Vec<u64> = (0..entries.len() as u64).collect();
    ids.shuffle(&mut r);
    for (e, id) in entries.iter_mut().zip(ids) {
        e.entry_id = id;
    }
    Gallery::new(entries, DistanceMetric::Euclidean).unwrap()
}

/// A small random detection stream for exhaustive checks. Objects drift
/// slowly, appear and disappear at random, and carry identities for the
/// synthetic oracle. Frame 0 holds only the template (object 0).
/// Box coordinates are multiples of 1/64 so location scores are exact.
pub fn random_stream(seed: u64, n_frames: usize, max_objects: usize) -> Vec<Vec<Detection<f64>>> {
    let mut r = rng(seed);
    let q = |v: f64| (v * 64.0).round() / 64.0;
    let n_obj = r.random_range(1..=max_objects.max(1));
    let mut pos: Vec<(f64, f64)> = (0..n_obj)
        .map(|_| (q(r.random_range(0.2..0.8)), q(r.random_range(0.2..0.8))))
        .collect();
    let mut det_id = 0u64;
    let mut stream = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let mut frame = Vec::new();
        for (o, p) in pos.iter_mut().enumerate() {
            if t > 0 {
                p.0 = q((p.0 + r.random_range(-0.05..0.05)).clamp(0.1, 0.9));
                p.1 = q((p.1 + r.random_range(-0.05..0.05)).clamp(0.1, 0.9));
            }
            let visible = if t == 0 { o == 0 } else { r.random_bool(0.75) };
            if !visible {
                continue;
            }
            let b = BBox::new(p.0, p.1, 0.125, 0.125).unwrap();
            let ff = q(r.random_range(0.0..1.0));
            frame.push(Detection::new(t, b, ff, vec![1.0], det_id).with_object(o as i64));
            det_id += 1;
        }
        stream.push(frame);
    }
    stream
}

/// A long, dense scenario for throughput checks: `n_objects` always-visible
/// objects with random prototypes wandering between random waypoints.
pub fn dense_scenario_spec(seed: u64, n_frames: usize, n_objects: usize, dim: usize) -> ScenarioSpec {
    let mut r = rng(seed);
    let objects = (0..n_objects)
        .map(|o| {
            let mut waypoints = Vec::new();
            let mut t = 0;
            while t < n_frames {
                waypoints.push(Waypoint {
                    t,
                    x: r.random_range(0.05..0.95),
                    y: r.random_range(0.05..0.95),
                    w: 0.05,
                    h: 0.08,
                });
                t += r.random_range(200..800);
            }
            ObjectSpec {
                id: o as i64,
                is_target: o == 0,
                waypoints,
                visibility: vec![[0, n_frames]],
                embedding_prototype: (0..dim).map(|_| r.random_range(-1.0..1.0)).collect(),
                embedding_noise_sd: 0.05,
                ff_score: r.random_range(0.2..0.9),
            }
        })
        .collect();
    ScenarioSpec {
        n_frames,
        frame_w: 640.0,
        frame_h: 480.0,
        objects,
        detector: DetectorNoise {
            box_jitter_sd: 0.002,
            ff_score_noise_sd: 0.05,
            ..DetectorNoise::default()
        },
        seed,
    }
}
