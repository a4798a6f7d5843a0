//! Re-detection similarity oracles.
//!
//! An oracle stands in for the re-detection head: given a detection and a
//! reference detection it returns a raw similarity score. Scores are not
//! probabilities and are not assumed symmetric in their two arguments.

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::spatial_distance;
use crate::rng::keyed_normal;
use crate::scalar::Scalar;

/// Scores a detection against a reference detection.
pub trait SimilarityOracle<T: Scalar> {
    fn score(&self, det: &Detection<T>, reference: &Detection<T>, seed: u64) -> Result<T>;
}

/// Base score for an ordered pair of object ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Confusion<T> {
    pub a: i64,
    pub b: i64,
    pub score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SyntheticIdentityParams<T> {
    pub same_id_mean: T,
    pub noise_sd: T,
    /// Base score for id pairs not listed in `confusability`.
    #[serde(default = "zero")]
    pub cross_id_mean: T,
    #[serde(default)]
    pub confusability: Vec<Confusion<T>>,
}

fn zero<T: Scalar>() -> T {
    T::zero()
}

impl<T: Scalar> SyntheticIdentityParams<T> {
    pub fn new(same_id_mean: T, noise_sd: T) -> Self {
        SyntheticIdentityParams {
            same_id_mean,
            noise_sd,
            cross_id_mean: T::zero(),
            confusability: Vec::new(),
        }
    }

    /// Base score for `(a, b)`. An entry listed in one direction only is used for both.
    pub fn base(&self, a: i64, b: i64) -> T {
        let direct = self.confusability.iter().find(|c| c.a == a && c.b == b);
        let reverse = || self.confusability.iter().find(|c| c.a == b && c.b == a);
        match direct.or_else(reverse) {
            Some(c) => c.score,
            None if a == b => self.same_id_mean,
            None => self.cross_id_mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.noise_sd.is_finite() || self.noise_sd < T::zero() {
            return Err(Error::InvalidParam(format!(
                "noise_sd must be finite and >= 0, got {}",
                self.noise_sd
            )));
        }
        let finite = self.same_id_mean.is_finite()
            && self.cross_id_mean.is_finite()
            && self.confusability.iter().all(|c| c.score.is_finite());
        if !finite {
            return Err(Error::InvalidParam("oracle base scores must be finite".into()));
        }
        Ok(())
    }
}

/// The available oracle variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
#[derive(Default)]
pub enum OracleKind<T> {
    /// Cosine similarity of embeddings, in `[-1, 1]`.
    #[default]
    CosineEmbedding,
    /// Identity-table score plus deterministic Gaussian noise.
    SyntheticIdentity(SyntheticIdentityParams<T>),
}


impl<T: Scalar> OracleKind<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            OracleKind::CosineEmbedding => Ok(()),
            OracleKind::SyntheticIdentity(p) => p.validate(),
        }
    }
}

/// Cosine similarity; a zero vector has similarity 0 with everything.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&u, &v) in a.iter().zip(b) {
        dot += u * v;
        na += u * u;
        nb += v * v;
    }
    if na <= T::zero() || nb <= T::zero() {
        return T::zero();
    }
    (dot / (na.sqrt() * nb.sqrt())).max(-T::one()).min(T::one())
}

impl<T: Scalar> SimilarityOracle<T> for OracleKind<T> {
    fn score(&self, det: &Detection<T>, reference: &Detection<T>, seed: u64) -> Result<T> {
        match self {
            OracleKind::CosineEmbedding => {
                if det.embedding.len() != reference.embedding.len() {
                    return Err(Error::DimensionMismatch {
                        expected: reference.embedding.len(),
                        got: det.embedding.len(),
                        det_id: det.det_id,
                    });
                }
                Ok(cosine(&det.embedding, &reference.embedding))
            }
            OracleKind::SyntheticIdentity(p) => {
                let a = det.object_id.ok_or(Error::MissingObjectId(det.det_id))?;
                let b = reference
                    .object_id
                    .ok_or(Error::MissingObjectId(reference.det_id))?;
                let base = p.base(a, b);
                if p.noise_sd == T::zero() {
                    return Ok(base);
                }
                let n = keyed_normal(seed, &[det.det_id, reference.det_id]);
                Ok(base + p.noise_sd * T::of(n))
            }
        }
    }
}

/// Scores every detection against one reference.
pub fn score_against_reference<T: Scalar, O: SimilarityOracle<T> + ?Sized>(
    oracle: &O,
    dets: &[Detection<T>],
    reference: &Detection<T>,
    seed: u64,
) -> Result<Vec<T>> {
    dets.iter().map(|d| oracle.score(d, reference, seed)).collect()
}

/// Dense row-major score matrix; rows are current detections, columns previous ones.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseScores<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> PairwiseScores<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        PairwiseScores {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::ShapeMismatch {
                rows: r,
                cols: c,
                got_rows: r,
                got_cols: bad.len(),
            });
        }
        Ok(PairwiseScores {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Pairwise re-detection scores of `dets_t` against `dets_prev`, with pairs
/// farther apart than `gamma` (L∞) set to `-inf`. Distance exactly `gamma` is kept.
pub fn pairwise_gated_scores<T: Scalar, O: SimilarityOracle<T> + ?Sized>(
    oracle: &O,
    dets_t: &[Detection<T>],
    dets_prev: &[Detection<T>],
    gamma: T,
    seed: u64,
) -> Result<PairwiseScores<T>> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(gamma > T::zero()) {
        return Err(Error::InvalidParam(format!("gamma must be > 0, got {gamma}")));
    }
    let mut m = PairwiseScores::filled(dets_t.len(), dets_prev.len(), T::neg_infinity());
    for (i, d) in dets_t.iter().enumerate() {
        for (j, p) in dets_prev.iter().enumerate() {
            if spatial_distance(&d.bbox, &p.bbox) <= gamma {
                m.set(i, j, oracle.score(d, p, seed)?);
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn det(id: u64, x: f64, emb: Vec<f64>) -> Detection<f64> {
        Detection::new(0, BBox::new(x, 0.5, 0.1, 0.1).unwrap(), 0.0, emb, id)
    }

    #[test]
    fn cosine_identical_and_orthogonal() {
        let o = OracleKind::<f64>::CosineEmbedding;
        let r = det(0, 0.5, vec![1.0, 2.0, 3.0]);
        let same = det(1, 0.5, vec![1.0, 2.0, 3.0]);
        let orth = det(2, 0.5, vec![3.0, 0.0, -1.0]);
        let s = score_against_reference(&o, &[same, orth], &r, 0).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn cosine_dimension_mismatch_is_error() {
        let o = OracleKind::<f64>::CosineEmbedding;
        let r = det(0, 0.5, vec![1.0, 2.0]);
        let e = o.score(&det(1, 0.5, vec![1.0]), &r, 0).unwrap_err();
        assert!(matches!(e, Error::DimensionMismatch { expected: 2, got: 1, det_id: 1 }));
    }

    #[test]
    fn synthetic_identity_zero_noise_and_missing_id() {
        let o = OracleKind::SyntheticIdentity(SyntheticIdentityParams::new(0.9, 0.0));
        let r = det(0, 0.5, vec![]).with_object(3);
        let d = det(1, 0.5, vec![]).with_object(3);
        assert_eq!(o.score(&d, &r, 11).unwrap(), 0.9);
        assert_eq!(o.score(&det(2, 0.5, vec![]), &r, 11), Err(Error::MissingObjectId(2)));
    }

    #[test]
    fn synthetic_identity_uses_confusability_either_direction() {
        let mut p = SyntheticIdentityParams::new(0.9, 0.0);
        p.cross_id_mean = -0.5;
        p.confusability.push(Confusion { a: 1, b: 2, score: 0.7 });
        assert_eq!(p.base(1, 2), 0.7);
        assert_eq!(p.base(2, 1), 0.7);
        assert_eq!(p.base(1, 3), -0.5);
        assert_eq!(p.base(4, 4), 0.9);
    }

    #[test]
    fn synthetic_noise_is_keyed_not_ordered() {
        let o = OracleKind::SyntheticIdentity(SyntheticIdentityParams::new(0.5, 0.2));
        let r = det(10, 0.5, vec![]).with_object(1);
        let a = det(1, 0.5, vec![]).with_object(1);
        let b = det(2, 0.5, vec![]).with_object(2);
        let fwd = score_against_reference(&o, &[a.clone(), b.clone()], &r, 5).unwrap();
        let rev = score_against_reference(&o, &[b, a], &r, 5).unwrap();
        assert_eq!(fwd[0], rev[1]);
        assert_eq!(fwd[1], rev[0]);
        assert_ne!(fwd[0], 0.5);
    }

    #[test]
    fn gating_boundary_and_empty_prev() {
        let o = OracleKind::<f64>::CosineEmbedding;
        let cur = vec![det(1, 0.5, vec![1.0])];
        let prev = vec![det(2, 0.25, vec![1.0]), det(3, 0.8, vec![1.0])];
        let m = pairwise_gated_scores(&o, &cur, &prev, 0.25, 0).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), f64::NEG_INFINITY);
        let empty = pairwise_gated_scores(&o, &cur, &[], 0.3, 0).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (1, 0));
        assert!(pairwise_gated_scores(&o, &cur, &prev, 0.0, 0).is_err());
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let o = OracleKind::<f64>::CosineEmbedding;
        let r = det(0, 0.5, vec![0.3, -1.0, 2.0]);
        let d = det(1, 0.5, vec![1.5, 0.25, 0.5]);
        let mut scaled = d.clone();
        scaled.embedding.iter_mut().for_each(|v| *v *= 7.5);
        let a = o.score(&d, &r, 0).unwrap();
        let b = o.score(&scaled, &r, 0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
