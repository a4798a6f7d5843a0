//! Deterministic synthetic detection streams with ground-truth identities.
//!
//! Objects move along piecewise-linear waypoint paths and are visible on a
//! set of half-open frame intervals. A noisy detector observes them: each
//! visible object may be missed, boxes are jittered, embeddings are the
//! object's prototype plus Gaussian noise, and clutter detections with fresh
//! negative ids and random appearance are sprinkled in. Every random draw is
//! keyed by `(seed, frame, object)`, so frames can be generated lazily.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Frame};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rng::keyed_rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: Frame,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: i64,
    pub is_target: bool,
    pub waypoints: Vec<Waypoint>,
    /// Half-open `[start, end)` frame intervals.
    pub visibility: Vec<[Frame; 2]>,
    pub embedding_prototype: Vec<f64>,
    #[serde(default)]
    pub embedding_noise_sd: f64,
    /// Mean re-detection score against the first-frame template.
    pub ff_score: f64,
}

impl ObjectSpec {
    pub fn visible_at(&self, t: Frame) -> bool {
        self.visibility.iter().any(|&[a, b]| a <= t && t < b)
    }

    /// Noise-free box at frame `t`.
    pub fn box_at(&self, t: Frame) -> [f64; 4] {
        let wp = &self.waypoints;
        let first = wp[0];
        let last = wp[wp.len() - 1];
        let arr = |w: Waypoint| [w.x, w.y, w.w, w.h];
        if t <= first.t {
            return arr(first);
        }
        if t >= last.t {
            return arr(last);
        }
        let k = wp.partition_point(|w| w.t <= t);
        let (a, b) = (wp[k - 1], wp[k]);
        let s = (t - a.t) as f64 / (b.t - a.t) as f64;
        let lerp = |u: f64, v: f64| u + s * (v - u);
        [lerp(a.x, b.x), lerp(a.y, b.y), lerp(a.w, b.w), lerp(a.h, b.h)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorNoise {
    /// Probability of missing a visible object in a frame.
    pub miss_rate: f64,
    /// Expected clutter detections per frame (Poisson).
    pub clutter_rate: f64,
    /// Standard deviation of the Gaussian added to each box coordinate.
    pub box_jitter_sd: f64,
    pub ff_score_noise_sd: f64,
    /// Mean first-frame score of clutter detections.
    pub clutter_ff_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_frames: usize,
    #[serde(default = "default_frame_w")]
    pub frame_w: f64,
    #[serde(default = "default_frame_h")]
    pub frame_h: f64,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub detector: DetectorNoise,
    #[serde(default)]
    pub seed: u64,
}

fn default_frame_w() -> f64 {
    640.0
}

fn default_frame_h() -> f64 {
    480.0
}

impl ScenarioSpec {
    pub fn target(&self) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.is_target)
    }

    pub fn embedding_dim(&self) -> usize {
        self.objects.first().map_or(0, |o| o.embedding_prototype.len())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.n_frames < 1 {
            return bad("n_frames must be >= 1".into());
        }
        if !(self.frame_w > 0.0 && self.frame_h > 0.0) {
            return bad("frame dimensions must be positive".into());
        }
        let targets = self.objects.iter().filter(|o| o.is_target).count();
        if targets != 1 {
            return bad(format!("exactly one target object required, found {targets}"));
        }
        let dim = self.embedding_dim();
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            if o.id < 0 {
                return bad(format!("object id {} is negative (reserved for clutter)", o.id));
            }
            if !ids.insert(o.id) {
                return bad(format!("duplicate object id {}", o.id));
            }
            if o.waypoints.is_empty() {
                return bad(format!("object {} has no waypoints", o.id));
            }
            if o.waypoints.windows(2).any(|w| w[0].t >= w[1].t) {
                return bad(format!("object {} waypoints must have increasing t", o.id));
            }
            if o.embedding_prototype.len() != dim {
                return bad(format!("object {} prototype has dimension {}, expected {dim}", o.id, o.embedding_prototype.len()));
            }
            let mut iv = o.visibility.clone();
            iv.sort();
            for &[a, b] in &iv {
                if a >= b || b > self.n_frames {
                    return bad(format!("object {} interval [{a}, {b}) is empty or outside [0, {})", o.id, self.n_frames));
                }
            }
            if iv.windows(2).any(|w| w[0][1] > w[1][0]) {
                return bad(format!("object {} has overlapping visibility intervals", o.id));
            }
            if !(o.embedding_noise_sd >= 0.0 && o.ff_score.is_finite()) {
                return bad(format!("object {} has invalid noise or score", o.id));
            }
        }
        if !self.target().is_some_and(|t| t.visible_at(0)) {
            return bad("target must be visible at frame 0".into());
        }
        let d = &self.detector;
        if !(0.0..=1.0).contains(&d.miss_rate) || d.clutter_rate < 0.0 || d.box_jitter_sd < 0.0 || d.ff_score_noise_sd < 0.0 {
            return bad("detector noise parameters out of range".into());
        }
        Ok(())
    }
}

/// One generated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame<T> {
    pub t: Frame,
    pub detections: Vec<Detection<T>>,
    /// Noise-free target box, `None` while the target is not visible.
    pub truth: Option<BBox<T>>,
    /// Ids of visible objects the detector missed.
    pub misses: Vec<i64>,
}

/// Lazy frame-by-frame generator.
#[derive(Debug, Clone)]
pub struct FrameGenerator<'a, T> {
    spec: &'a ScenarioSpec,
    t: Frame,
    next_det_id: u64,
    proto_norm: f64,
    _scalar: std::marker::PhantomData<T>,
}

impl<'a, T: Scalar> FrameGenerator<'a, T> {
    pub fn new(spec: &'a ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let norms: Vec<f64> = spec
            .objects
            .iter()
            .map(|o| o.embedding_prototype.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Ok(FrameGenerator {
            spec,
            t: 0,
            next_det_id: 0,
            proto_norm: norms.iter().sum::<f64>() / norms.len() as f64,
            _scalar: std::marker::PhantomData,
        })
    }

    fn make_box(b: [f64; 4]) -> BBox<T> {
        // Waypoint boxes are finite by construction.
        BBox::new(T::of(b[0]), T::of(b[1]), T::of(b[2]), T::of(b[3])).expect("finite box")
    }

    fn frame(&mut self, t: Frame) -> SimFrame<T> {
        let spec = self.spec;
        let noise = &spec.detector;
        let seed = spec.seed;
        let mut dets: Vec<(Detection<T>, bool)> = Vec::new();
        let mut misses = Vec::new();
        let mut truth = None;

        for (k, obj) in spec.objects.iter().enumerate() {
            if !obj.visible_at(t) {
                continue;
            }
            let clean = obj.box_at(t);
            if obj.is_target {
                truth = Some(Self::make_box(clean));
            }
            let mut rng = keyed_rng(seed, &[t as u64, k as u64]);
            let is_template = obj.is_target && t == 0;
            let missed = rng.random::<f64>() < noise.miss_rate;
            if missed && !is_template {
                misses.push(obj.id);
                continue;
            }
            let jitter = |rng: &mut rand_chacha::ChaCha8Rng, sd: f64| {
                if sd > 0.0 {
                    let z: f64 = StandardNormal.sample(rng);
                    sd * z
                } else {
                    0.0
                }
            };
            let noisy: Vec<f64> = clean.iter().map(|&v| v + jitter(&mut rng, noise.box_jitter_sd)).collect();
            let embedding = obj
                .embedding_prototype
                .iter()
                .map(|&v| T::of(v + jitter(&mut rng, obj.embedding_noise_sd)))
                .collect();
            let ff = obj.ff_score + jitter(&mut rng, noise.ff_score_noise_sd);
            let det = Detection {
                t,
                bbox: Self::make_box([noisy[0], noisy[1], noisy[2].max(1e-4), noisy[3].max(1e-4)]),
                ff_score: T::of(ff),
                embedding,
                object_id: Some(obj.id),
                det_id: 0,
            };
            dets.push((det, is_template));
        }

        let mut rng = keyed_rng(seed, &[t as u64, u64::MAX]);
        if noise.clutter_rate > 0.0 {
            let n = Poisson::new(noise.clutter_rate)
                .map(|p| p.sample(&mut rng) as usize)
                .unwrap_or(0);
            let dim = spec.embedding_dim();
            let score_noise = Normal::new(0.0, noise.ff_score_noise_sd.max(0.0)).expect("valid sd");
            for c in 0..n {
                let mut proto: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = proto.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                proto.iter_mut().for_each(|v| *v *= self.proto_norm / norm);
                let b = [
                    rng.random_range(0.05..0.95),
                    rng.random_range(0.05..0.95),
                    rng.random_range(0.03..0.15),
                    rng.random_range(0.03..0.15),
                ];
                dets.push((
                    Detection {
                        t,
                        bbox: Self::make_box(b),
                        ff_score: T::of(noise.clutter_ff_score + score_noise.sample(&mut rng)),
                        embedding: proto.into_iter().map(T::of).collect(),
                        object_id: Some(-(1 + (t as i64) * 1000 + c as i64)),
                        det_id: 0,
                    },
                    false,
                ));
            }
        }

        // Template first at frame 0, everything else in random order.
        dets.shuffle(&mut rng);
        dets.sort_by_key(|(_, tpl)| !*tpl);
        let detections = dets
            .into_iter()
            .map(|(mut d, _)| {
                d.det_id = self.next_det_id;
                self.next_det_id += 1;
                d
            })
            .collect();
        SimFrame {
            t,
            detections,
            truth,
            misses,
        }
    }
}

impl<T: Scalar> Iterator for FrameGenerator<'_, T> {
    type Item = SimFrame<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.t >= self.spec.n_frames {
            return None;
        }
        let f = self.frame(self.t);
        self.t += 1;
        Some(f)
    }
}

/// A fully materialized scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub stream: Vec<Vec<Detection<T>>>,
    pub truth: Vec<Option<BBox<T>>>,
    pub misses: Vec<(Frame, i64)>,
    pub target_id: i64,
    pub frame_w: f64,
    pub frame_h: f64,
}

impl<T: Scalar> Scenario<T> {
    /// The first-frame template detection (always first at frame 0).
    pub fn template(&self) -> &Detection<T> {
        &self.stream[0][0]
    }

    /// Per-frame target id when visible, `None` otherwise.
    pub fn truth_ids(&self) -> Vec<Option<i64>> {
        self.truth.iter().map(|b| b.map(|_| self.target_id)).collect()
    }
}

pub fn generate<T: Scalar>(spec: &ScenarioSpec) -> Result<Scenario<T>> {
    let gen = FrameGenerator::<T>::new(spec)?;
    let target_id = spec.target().map(|o| o.id).unwrap_or_default();
    let mut out = Scenario {
        stream: Vec::with_capacity(spec.n_frames),
        truth: Vec::with_capacity(spec.n_frames),
        misses: Vec::new(),
        target_id,
        frame_w: spec.frame_w,
        frame_h: spec.frame_h,
    };
    for f in gen {
        out.misses.extend(f.misses.iter().map(|&id| (f.t, id)));
        out.stream.push(f.detections);
        out.truth.push(f.truth);
    }
    Ok(out)
}

pub const PRESET_NAMES: [&str; 4] = ["crossing_distractor", "occlusion_40", "out_of_view", "clutter"];

const PRESET_DIM: usize = 16;

/// Unit vectors `(p, q)` with `cos(p, q) = cos`, fixed per `key`.
fn prototype_pair(cos: f64, key: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = keyed_rng(0x5eed, &[key]);
    let mut draw = || -> Vec<f64> { (0..PRESET_DIM).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let normalize = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    };
    let mut p = draw();
    normalize(&mut p);
    let mut q = draw();
    let proj: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
    q.iter_mut().zip(&p).for_each(|(x, a)| *x -= proj * a);
    normalize(&mut q);
    let sin = (1.0 - cos * cos).sqrt();
    let d = p.iter().zip(&q).map(|(a, b)| cos * a + sin * b).collect();
    (p, d)
}

fn wp(t: Frame, x: f64, y: f64, w: f64, h: f64) -> Waypoint {
    Waypoint { t, x, y, w, h }
}

/// Gap length of the `occlusion_40` preset, in frames.
pub const OCCLUSION_GAP: usize = 41;
pub const OCCLUSION_GAP_START: usize = 50;

/// Built-in scenarios, all at seed 0:
///
/// * `crossing_distractor`: a similar-looking distractor crosses the target
///   mid-sequence; noisy first-frame scores make per-frame argmax unreliable.
/// * `occlusion_40`: the target vanishes for 41 frames while a dissimilar
///   object stays in view.
/// * `out_of_view`: the target leaves and re-enters at a different place.
/// * `clutter`: heavy background clutter around a single target.
pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let spec = match name {
        "crossing_distractor" => {
            let (p, q) = prototype_pair(0.75, 1);
            ScenarioSpec {
                n_frames: 100,
                frame_w: 640.0,
                frame_h: 480.0,
                objects: vec![
                    ObjectSpec {
                        id: 1,
                        is_target: true,
                        waypoints: vec![wp(0, 0.2, 0.5, 0.08, 0.12), wp(99, 0.8, 0.5, 0.08, 0.12)],
                        visibility: vec![[0, 100]],
                        embedding_prototype: p,
                        embedding_noise_sd: 0.05,
                        ff_score: 0.7,
                    },
                    ObjectSpec {
                        id: 2,
                        is_target: false,
                        waypoints: vec![wp(0, 0.8, 0.53, 0.08, 0.12), wp(99, 0.2, 0.47, 0.08, 0.12)],
                        visibility: vec![[0, 100]],
                        embedding_prototype: q,
                        embedding_noise_sd: 0.05,
                        ff_score: 0.6,
                    },
                ],
                detector: DetectorNoise {
                    miss_rate: 0.02,
                    clutter_rate: 0.3,
                    box_jitter_sd: 0.003,
                    ff_score_noise_sd: 0.1,
                    clutter_ff_score: 0.3,
                },
                seed: 0,
            }
        }
        "occlusion_40" => {
            let (p, q) = prototype_pair(0.3, 2);
            let gap_end = OCCLUSION_GAP_START + OCCLUSION_GAP;
            ScenarioSpec {
                n_frames: 150,
                frame_w: 640.0,
                frame_h: 480.0,
                objects: vec![
                    ObjectSpec {
                        id: 1,
                        is_target: true,
                        waypoints: vec![wp(0, 0.3, 0.5, 0.1, 0.15), wp(149, 0.5, 0.5, 0.1, 0.15)],
                        visibility: vec![[0, OCCLUSION_GAP_START], [gap_end, 150]],
                        embedding_prototype: p,
                        embedding_noise_sd: 0.02,
                        ff_score: 0.9,
                    },
                    ObjectSpec {
                        id: 2,
                        is_target: false,
                        waypoints: vec![wp(0, 0.85, 0.15, 0.1, 0.1)],
                        visibility: vec![[0, 150]],
                        embedding_prototype: q,
                        embedding_noise_sd: 0.02,
                        ff_score: 0.4,
                    },
                ],
                detector: DetectorNoise {
                    miss_rate: 0.0,
                    clutter_rate: 0.0,
                    box_jitter_sd: 0.002,
                    ff_score_noise_sd: 0.02,
                    clutter_ff_score: 0.0,
                },
                seed: 0,
            }
        }
        "out_of_view" => {
            let (p, q) = prototype_pair(0.6, 3);
            ScenarioSpec {
                n_frames: 120,
                frame_w: 640.0,
                frame_h: 480.0,
                objects: vec![
                    ObjectSpec {
                        id: 1,
                        is_target: true,
                        waypoints: vec![
                            wp(0, 0.2, 0.3, 0.08, 0.1),
                            wp(39, 0.35, 0.3, 0.08, 0.1),
                            wp(75, 0.7, 0.7, 0.08, 0.1),
                            wp(119, 0.8, 0.7, 0.08, 0.1),
                        ],
                        visibility: vec![[0, 40], [75, 120]],
                        embedding_prototype: p,
                        embedding_noise_sd: 0.03,
                        ff_score: 0.8,
                    },
                    ObjectSpec {
                        id: 2,
                        is_target: false,
                        waypoints: vec![wp(0, 0.5, 0.85, 0.08, 0.1), wp(119, 0.6, 0.85, 0.08, 0.1)],
                        visibility: vec![[0, 120]],
                        embedding_prototype: q,
                        embedding_noise_sd: 0.03,
                        ff_score: 0.55,
                    },
                ],
                detector: DetectorNoise {
                    miss_rate: 0.01,
                    clutter_rate: 0.2,
                    box_jitter_sd: 0.003,
                    ff_score_noise_sd: 0.05,
                    clutter_ff_score: 0.3,
                },
                seed: 0,
            }
        }
        "clutter" => {
            let (p, _) = prototype_pair(0.0, 4);
            ScenarioSpec {
                n_frames: 100,
                frame_w: 640.0,
                frame_h: 480.0,
                objects: vec![ObjectSpec {
                    id: 1,
                    is_target: true,
                    waypoints: vec![wp(0, 0.3, 0.3, 0.1, 0.1), wp(99, 0.7, 0.6, 0.1, 0.1)],
                    visibility: vec![[0, 100]],
                    embedding_prototype: p,
                    embedding_noise_sd: 0.03,
                    ff_score: 0.7,
                }],
                detector: DetectorNoise {
                    miss_rate: 0.02,
                    clutter_rate: 5.0,
                    box_jitter_sd: 0.003,
                    ff_score_noise_sd: 0.15,
                    clutter_ff_score: 0.35,
                },
                seed: 0,
            }
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(noise: DetectorNoise, visibility: Vec<[Frame; 2]>, n: usize) -> ScenarioSpec {
        ScenarioSpec {
            n_frames: n,
            frame_w: 640.0,
            frame_h: 480.0,
            objects: vec![ObjectSpec {
                id: 4,
                is_target: true,
                waypoints: vec![wp(0, 0.2, 0.2, 0.1, 0.1), wp(n - 1, 0.8, 0.8, 0.1, 0.1)],
                visibility,
                embedding_prototype: vec![1.0, 0.0, 0.0],
                embedding_noise_sd: 0.0,
                ff_score: 0.9,
            }],
            detector: noise,
            seed: 3,
        }
    }

    #[test]
    fn noise_free_single_target() {
        let s = generate::<f64>(&single(DetectorNoise::default(), vec![[0, 20]], 20)).unwrap();
        assert_eq!(s.stream.len(), 20);
        for (t, frame) in s.stream.iter().enumerate() {
            assert_eq!(frame.len(), 1);
            assert_eq!(frame[0].object_id, Some(4));
            assert_eq!(frame[0].t, t);
            assert_eq!(Some(frame[0].bbox), s.truth[t]);
        }
    }

    #[test]
    fn visibility_gap_is_exact() {
        let s = generate::<f64>(&single(DetectorNoise::default(), vec![[0, 50], [90, 120]], 120)).unwrap();
        for t in 0..120 {
            let absent = (50..90).contains(&t);
            assert_eq!(s.truth[t].is_none(), absent, "frame {t}");
            assert_eq!(s.stream[t].is_empty(), absent);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = preset("crossing_distractor").unwrap();
        let a = generate::<f64>(&spec).unwrap();
        let b = generate::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed = 1;
        assert_ne!(a, generate::<f64>(&other).unwrap());
    }

    #[test]
    fn all_presets_generate() {
        for name in PRESET_NAMES {
            let s = generate::<f64>(&preset(name).unwrap()).unwrap();
            assert_eq!(s.template().object_id, Some(s.target_id), "{name}");
            let mut ids: Vec<u64> = s.stream.iter().flatten().map(|d| d.det_id).collect();
            let n = ids.len();
            ids.dedup();
            assert_eq!(ids.len(), n);
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn occlusion_preset_gap_is_41_frames() {
        let spec = preset("occlusion_40").unwrap();
        let s = generate::<f64>(&spec).unwrap();
        let absent = s.truth.iter().filter(|b| b.is_none()).count();
        assert_eq!(absent, 41);
        assert!(s.truth[OCCLUSION_GAP_START - 1].is_some());
        assert!(s.truth[OCCLUSION_GAP_START].is_none());
        assert!(s.truth[OCCLUSION_GAP_START + OCCLUSION_GAP].is_some());
    }

    #[test]
    fn crossing_preset_trajectories_intersect() {
        let spec = preset("crossing_distractor").unwrap();
        let gap = |t: Frame| {
            let a = spec.objects[0].box_at(t);
            let b = spec.objects[1].box_at(t);
            (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
        };
        assert!(gap(0) > 0.5 && gap(99) > 0.5);
        assert!(gap(50) < 0.02);
    }

    #[test]
    fn misses_are_logged() {
        let noise = DetectorNoise { miss_rate: 0.5, ..DetectorNoise::default() };
        let s = generate::<f64>(&single(noise, vec![[0, 200]], 200)).unwrap();
        assert!(!s.misses.is_empty());
        for t in 0..200 {
            let seen = s.stream[t].iter().any(|d| d.object_id == Some(4));
            let missed = s.misses.contains(&(t, 4));
            assert!(seen ^ missed, "frame {t}");
        }
        assert!(s.stream[0].iter().any(|d| d.object_id == Some(4)));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = single(DetectorNoise::default(), vec![[0, 10]], 10);
        s.objects[0].is_target = false;
        assert!(generate::<f64>(&s).is_err());
        let s = single(DetectorNoise::default(), vec![[0, 5], [3, 8]], 10);
        assert!(generate::<f64>(&s).is_err());
        let s = single(DetectorNoise::default(), vec![[2, 10]], 10);
        assert!(generate::<f64>(&s).is_err());
        let s = single(DetectorNoise::default(), vec![[0, 11]], 10);
        assert!(generate::<f64>(&s).is_err());
    }
}
