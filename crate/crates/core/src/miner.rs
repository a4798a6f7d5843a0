//! Video hard example mining.
//!
//! Ground-truth boxes of many videos are indexed by embedding. For a
//! reference box the nearest neighbors from *other* videos are retrieved,
//! one neighbor is drawn from each of up to `n_videos` randomly chosen
//! videos as a hard negative, and frames of the reference video are drawn
//! as balancing positives. Box jitter with a clipped Gaussian is applied in
//! normalized corner coordinates.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detection::Frame;
use crate::error::{Error, Result};
use crate::geometry::{BBox, CornerBox};
use crate::oracle::cosine;
use crate::rng::keyed_rng;
use crate::scalar::{cmp_scalar, Scalar};

pub mod forest;

pub use forest::RandomProjectionForest;

/// Neighbors retrieved per query unless configured otherwise.
pub const DEFAULT_K: usize = 10_000;
/// Videos sampled for negatives.
pub const DEFAULT_NEGATIVE_VIDEOS: usize = 100;
/// Frames of the reference video sampled as positives.
pub const DEFAULT_POSITIVES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry<T> {
    pub video_id: i64,
    pub frame: Frame,
    pub bbox: BBox<T>,
    pub embedding: Vec<T>,
    pub entry_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// `1 - cosine similarity`.
    Cosine,
}

impl DistanceMetric {
    pub fn distance<T: Scalar>(self, a: &[T], b: &[T]) -> T {
        match self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .fold(T::zero(), |acc, (&u, &v)| acc + (u - v) * (u - v))
                .sqrt(),
            DistanceMetric::Cosine => T::one() - cosine(a, b),
        }
    }
}

/// Immutable embedding gallery with a fixed dimension.
#[derive(Debug, Clone)]
pub struct Gallery<T> {
    entries: Vec<GalleryEntry<T>>,
    dim: usize,
    metric: DistanceMetric,
}

impl<T: Scalar> Gallery<T> {
    pub fn new(entries: Vec<GalleryEntry<T>>, metric: DistanceMetric) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.embedding.len());
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if e.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.embedding.len(),
                    det_id: e.entry_id,
                });
            }
            if !seen.insert(e.entry_id) {
                return Err(Error::InvalidParam(format!("duplicate entry_id {}", e.entry_id)));
            }
        }
        Ok(Gallery { entries, dim, metric })
    }

    pub fn entries(&self) -> &[GalleryEntry<T>] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, entry_id: u64) -> Option<&GalleryEntry<T>> {
        self.entries.iter().find(|e| e.entry_id == entry_id)
    }

    pub(crate) fn check_query(&self, query: &[T]) -> Result<()> {
        if !self.entries.is_empty() && query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
                det_id: u64::MAX,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<'a, T> {
    pub entry: &'a GalleryEntry<T>,
    pub distance: T,
}

fn by_distance<T: Scalar>(a: &Neighbor<'_, T>, b: &Neighbor<'_, T>) -> std::cmp::Ordering {
    cmp_scalar(a.distance, b.distance).then(a.entry.entry_id.cmp(&b.entry.entry_id))
}

/// Keeps the `k` closest of `all`, sorted by `(distance, entry_id)`.
pub(crate) fn top_k<T: Scalar>(mut all: Vec<Neighbor<'_, T>>, k: usize) -> Vec<Neighbor<'_, T>> {
    if k == 0 {
        return Vec::new();
    }
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, by_distance);
        all.truncate(k);
    }
    all.sort_by(by_distance);
    all
}

/// Exact k-nearest-neighbor search, skipping entries of `exclude_video`.
pub fn knn_query<'a, T: Scalar>(
    gallery: &'a Gallery<T>,
    query: &[T],
    k: usize,
    exclude_video: Option<i64>,
) -> Result<Vec<Neighbor<'a, T>>> {
    gallery.check_query(query)?;
    let metric = gallery.metric;
    let all = gallery
        .entries
        .iter()
        .filter(|e| Some(e.video_id) != exclude_video)
        .map(|e| Neighbor {
            entry: e,
            distance: metric.distance(query, &e.embedding),
        })
        .collect();
    Ok(top_k(all, k))
}

/// One neighbor from each of up to `n_videos` distinct videos, with videos
/// drawn uniformly without replacement and the neighbor uniformly within its video.
pub fn sample_negatives<T: Scalar>(
    neighbors: &[Neighbor<'_, T>],
    n_videos: usize,
    seed: u64,
) -> Vec<GalleryEntry<T>> {
    let mut by_video: BTreeMap<i64, Vec<&GalleryEntry<T>>> = BTreeMap::new();
    for n in neighbors {
        by_video.entry(n.entry.video_id).or_default().push(n.entry);
    }
    let videos: Vec<_> = by_video.values().collect();
    let mut rng = keyed_rng(seed, &[0x6e67]);
    let amount = n_videos.min(videos.len());
    sample(&mut rng, videos.len(), amount)
        .into_iter()
        .map(|vi| {
            let members = videos[vi];
            members[rng.random_range(0..members.len())].clone()
        })
        .collect()
}

/// Up to `n` entries of `video_id` on distinct frames, drawn uniformly
/// without replacement. On frames with several entries the lowest entry_id is used.
pub fn sample_positives<T: Scalar>(
    gallery: &Gallery<T>,
    video_id: i64,
    n: usize,
    seed: u64,
) -> Result<Vec<GalleryEntry<T>>> {
    let mut frames: BTreeMap<Frame, &GalleryEntry<T>> = BTreeMap::new();
    for e in gallery.entries.iter().filter(|e| e.video_id == video_id) {
        frames
            .entry(e.frame)
            .and_modify(|cur| {
                if e.entry_id < cur.entry_id {
                    *cur = e;
                }
            })
            .or_insert(e);
    }
    if frames.is_empty() {
        return Err(Error::UnknownVideo(video_id));
    }
    let per_frame: Vec<_> = frames.into_values().collect();
    let mut rng = keyed_rng(seed, &[0x7073]);
    let amount = n.min(per_frame.len());
    Ok(sample(&mut rng, per_frame.len(), amount)
        .into_iter()
        .map(|i| per_frame[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterParams<T> {
    pub sd: T,
    pub clip: T,
}

impl<T: Scalar> Default for JitterParams<T> {
    fn default() -> Self {
        JitterParams {
            sd: T::of(0.25),
            clip: T::of(0.25),
        }
    }
}

impl<T: Scalar> JitterParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd > T::zero() && self.clip > T::zero()) {
            return Err(Error::InvalidParam("jitter sd and clip must be > 0".into()));
        }
        Ok(())
    }
}

/// Clips a raw noise sample into `[-clip, clip]`.
#[inline]
pub fn clip_offset<T: Scalar>(raw: T, clip: T) -> T {
    raw.max(-clip).min(clip)
}

/// The four clipped offsets `jitter_box` adds for `seed`.
pub fn jitter_offsets<T: Scalar>(params: &JitterParams<T>, seed: u64) -> [T; 4] {
    let mut rng = keyed_rng(seed, &[0x6a74]);
    let mut out = [T::zero(); 4];
    for o in &mut out {
        let raw: f64 = StandardNormal.sample(&mut rng);
        *o = clip_offset(params.sd * T::of(raw), params.clip);
    }
    out
}

/// Adds independent clipped-Gaussian offsets to each corner coordinate.
pub fn jitter_box<T: Scalar>(b: &CornerBox<T>, params: &JitterParams<T>, seed: u64) -> CornerBox<T> {
    let [r0, r1, r2, r3] = jitter_offsets(params, seed);
    CornerBox {
        x0: b.x0 + r0,
        y0: b.y0 + r1,
        x1: b.x1 + r2,
        y1: b.y1 + r3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u64, video: i64, frame: Frame, emb: Vec<f64>) -> GalleryEntry<f64> {
        GalleryEntry {
            video_id: video,
            frame,
            bbox: BBox::new(0.5, 0.5, 0.1, 0.1).unwrap(),
            embedding: emb,
            entry_id: id,
        }
    }

    fn gallery() -> Gallery<f64> {
        Gallery::new(
            vec![
                entry(0, 1, 0, vec![0.0, 0.0]),
                entry(1, 2, 0, vec![1.0, 0.0]),
                entry(2, 2, 1, vec![0.0, 2.0]),
                entry(3, 3, 0, vec![3.0, 3.0]),
                entry(4, 1, 1, vec![1.0, 0.0]),
            ],
            DistanceMetric::Euclidean,
        )
        .unwrap()
    }

    #[test]
    fn knn_exact_match_first_and_excludes_video() {
        let g = gallery();
        let r = knn_query(&g, &[1.0, 0.0], 10, Some(1)).unwrap();
        assert_eq!(r[0].entry.entry_id, 1);
        assert_eq!(r[0].distance, 0.0);
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|n| n.entry.video_id != 1));
        assert!(r.windows(2).all(|w| w[0].distance <= w[1].distance));
        let none = knn_query(&g, &[1.0, 0.0], 2, None).unwrap();
        assert_eq!(none.iter().map(|n| n.entry.entry_id).collect::<Vec<_>>(), vec![1, 4]);
        assert!(knn_query(&g, &[1.0], 2, None).is_err());
    }

    #[test]
    fn knn_empty_after_exclusion() {
        let g = Gallery::new(vec![entry(0, 1, 0, vec![0.0])], DistanceMetric::Euclidean).unwrap();
        assert!(knn_query(&g, &[0.0], 5, Some(1)).unwrap().is_empty());
    }

    #[test]
    fn gallery_rejects_bad_entries() {
        assert!(Gallery::new(vec![entry(0, 1, 0, vec![0.0]), entry(1, 1, 1, vec![0.0, 1.0])], DistanceMetric::Euclidean).is_err());
        assert!(Gallery::new(vec![entry(0, 1, 0, vec![0.0]), entry(0, 1, 1, vec![1.0])], DistanceMetric::Euclidean).is_err());
    }

    #[test]
    fn negatives_one_per_video() {
        let g = gallery();
        let r = knn_query(&g, &[0.0, 0.0], 10, Some(3)).unwrap();
        let neg = sample_negatives(&r, 100, 1);
        let mut vids: Vec<_> = neg.iter().map(|e| e.video_id).collect();
        vids.sort();
        assert_eq!(vids, vec![1, 2]);
        let only_two = knn_query(&g, &[0.0, 2.0], 10, Some(1)).unwrap();
        let r2: Vec<_> = only_two.into_iter().filter(|n| n.entry.video_id == 2).collect();
        assert_eq!(sample_negatives(&r2, 100, 1).len(), 1);
        assert_eq!(sample_negatives(&r, 1, 4).len(), 1);
    }

    #[test]
    fn positives_contract() {
        let entries = (0..10).map(|f| entry(f as u64, 7, f, vec![f as f64])).collect();
        let g = Gallery::new(entries, DistanceMetric::Euclidean).unwrap();
        assert_eq!(sample_positives(&g, 7, 30, 0).unwrap().len(), 10);
        assert!(sample_positives(&g, 7, 0, 0).unwrap().is_empty());
        let a = sample_positives(&g, 7, 4, 9).unwrap();
        assert_eq!(a, sample_positives(&g, 7, 4, 9).unwrap());
        let mut frames: Vec<_> = a.iter().map(|e| e.frame).collect();
        frames.dedup();
        assert_eq!(frames.len(), 4);
        assert_eq!(sample_positives(&g, 8, 3, 0), Err(Error::UnknownVideo(8)));
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_offset(0.4, 0.25), 0.25);
        assert_eq!(clip_offset(-0.4, 0.25), -0.25);
        assert_eq!(clip_offset(0.1, 0.25), 0.1);
    }

    #[test]
    fn tiny_sd_leaves_box_unchanged() {
        let b = CornerBox::<f64> { x0: 0.1, y0: 0.2, x1: 0.4, y1: 0.6 };
        let p = JitterParams { sd: 1e-12, clip: 0.25 };
        let j = jitter_box(&b, &p, 3);
        for (u, v) in j.to_array().iter().zip(b.to_array()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_metric() {
        assert!((DistanceMetric::Cosine.distance(&[1.0, 0.0], &[2.0, 0.0]) - 0.0f64).abs() < 1e-12);
        assert!((DistanceMetric::Cosine.distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0f64).abs() < 1e-12);
    }
}
