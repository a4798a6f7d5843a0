//! Bounding boxes and the distance primitives the tracker is built on.
//!
//! The canonical representation is normalized center form `(x, y, w, h)`,
//! with `x`, `w` divided by the frame width and `y`, `h` by the frame
//! height. Pixel corner form only appears at I/O and metric boundaries.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of box constructions (process-wide) that had to clamp a coordinate into `[0, 1]`.
pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

/// Normalized center-form box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

fn clamp_unit<T: Scalar>(v: T, clamped: &mut bool) -> T {
    if v < T::zero() {
        *clamped = true;
        T::zero()
    } else if v > T::one() {
        *clamped = true;
        T::one()
    } else {
        v
    }
}

impl<T: Scalar> BBox<T> {
    /// Builds a box, clamping each coordinate into `[0, 1]`.
    ///
    /// Non-finite input is rejected; out-of-range input is clamped and
    /// counted in [`clamp_events`].
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::NonFiniteBox(format!("({x}, {y}, {w}, {h})")));
        }
        let mut clamped = false;
        let b = BBox {
            x: clamp_unit(x, &mut clamped),
            y: clamp_unit(y, &mut clamped),
            w: clamp_unit(w, &mut clamped),
            h: clamp_unit(h, &mut clamped),
        };
        if clamped {
            CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        }
        Ok(b)
    }

    pub fn from_array(a: [T; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    /// Corner form `(x0, y0, x1, y1)` in normalized coordinates.
    pub fn corners(&self) -> CornerBox<T> {
        let half = T::of(0.5);
        CornerBox {
            x0: self.x - half * self.w,
            y0: self.y - half * self.h,
            x1: self.x + half * self.w,
            y1: self.y + half * self.h,
        }
    }

    /// Moves the center by `(dx, dy)`, clamping the result.
    pub fn translated(&self, dx: T, dy: T) -> Result<Self> {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            x: U::of(self.x.as_f64()),
            y: U::of(self.y.as_f64()),
            w: U::of(self.w.as_f64()),
            h: U::of(self.h.as_f64()),
        }
    }
}

/// Corner-form box in normalized coordinates. Ordering of the corners is not enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerBox<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Scalar> CornerBox<T> {
    pub fn to_array(self) -> [T; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    /// Center form of this box; swapped corners are reordered first.
    pub fn to_bbox(&self) -> Result<BBox<T>> {
        let (x0, x1) = (self.x0.min(self.x1), self.x0.max(self.x1));
        let (y0, y1) = (self.y0.min(self.y1), self.y0.max(self.y1));
        let half = T::of(0.5);
        BBox::new(half * (x0 + x1), half * (y0 + y1), x1 - x0, y1 - y0)
    }
}

/// Pixel corner box together with the frame it lives in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
    pub frame_w: T,
    pub frame_h: T,
}

impl<T: Scalar> PixelBox<T> {
    pub fn from_bbox(b: &BBox<T>, frame_w: T, frame_h: T) -> Self {
        let c = b.corners();
        PixelBox {
            x0: c.x0 * frame_w,
            y0: c.y0 * frame_h,
            x1: c.x1 * frame_w,
            y1: c.y1 * frame_h,
            frame_w,
            frame_h,
        }
    }

    pub fn to_bbox(&self) -> Result<BBox<T>> {
        if !(self.frame_w > T::zero() && self.frame_h > T::zero()) {
            return Err(Error::InvalidParam(format!(
                "frame dimensions must be positive, got {}x{}",
                self.frame_w, self.frame_h
            )));
        }
        CornerBox {
            x0: self.x0 / self.frame_w,
            y0: self.y0 / self.frame_h,
            x1: self.x1 / self.frame_w,
            y1: self.y1 / self.frame_h,
        }
        .to_bbox()
    }

    pub fn center(&self) -> (T, T) {
        let half = T::of(0.5);
        (half * (self.x0 + self.x1), half * (self.y0 + self.y1))
    }
}

/// L∞ distance over `(x, y, w, h)`.
#[inline]
pub fn spatial_distance<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    (a.x - b.x)
        .abs()
        .max((a.y - b.y).abs())
        .max((a.w - b.w).abs())
        .max((a.h - b.h).abs())
}

/// L1 distance over `(x, y, w, h)`.
#[inline]
pub fn l1_distance<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    (a.x - b.x).abs() + (a.y - b.y).abs() + (a.w - b.w).abs() + (a.h - b.h).abs()
}

/// Negative L1 distance; penalizes spatial jumps.
#[inline]
pub fn loc_score_boxes<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    -l1_distance(a, b)
}

/// Intersection over union. Zero-area boxes have IoU 0 with everything,
/// including an identical zero-area box.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let (ca, cb) = (a.corners(), b.corners());
    // Areas from the same corners as the intersection, so identical boxes give exactly 1.
    let area_a = (ca.x1 - ca.x0) * (ca.y1 - ca.y0);
    let area_b = (cb.x1 - cb.x0) * (cb.y1 - cb.y0);
    if area_a <= T::zero() || area_b <= T::zero() {
        return T::zero();
    }
    let iw = (ca.x1.min(cb.x1) - ca.x0.max(cb.x0)).max(T::zero());
    let ih = (ca.y1.min(cb.y1) - ca.y0.max(cb.y0)).max(T::zero());
    let inter = iw * ih;
    let union = area_a + area_b - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one()).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn spatial_distance_examples() {
        assert_eq!(spatial_distance(&b(0.5, 0.5, 0.2, 0.2), &b(0.5, 0.5, 0.2, 0.2)), 0.0);
        let d = spatial_distance(&b(0.5, 0.5, 0.2, 0.2), &b(0.6, 0.5, 0.2, 0.3));
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn loc_score_examples() {
        assert_eq!(loc_score_boxes(&b(0.2, 0.3, 0.1, 0.1), &b(0.2, 0.3, 0.1, 0.1)), 0.0);
        let s = loc_score_boxes(&b(0.2, 0.3, 0.1, 0.1), &b(0.3, 0.3, 0.1, 0.2));
        assert!((s + 0.2).abs() < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let a = b(0.5, 0.5, 0.2, 0.2);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(0.1, 0.1, 0.1, 0.1)), 0.0);
        // corners [0.4,0.6]x[0.4,0.6] vs [0.5,0.7]x[0.4,0.6]: inter 0.02, union 0.06
        let v = iou(&a, &b(0.6, 0.5, 0.2, 0.2));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_iou_is_zero() {
        let z = b(0.5, 0.5, 0.0, 0.2);
        assert_eq!(iou(&z, &z), 0.0);
        assert_eq!(iou(&z, &b(0.5, 0.5, 0.2, 0.2)), 0.0);
    }

    #[test]
    fn constructor_clamps_and_counts() {
        let before = clamp_events();
        let c = b(1.2, -0.1, 0.5, 0.5);
        assert_eq!((c.x, c.y), (1.0, 0.0));
        assert!(clamp_events() > before);
        assert!(BBox::new(f64::NAN, 0.0, 0.1, 0.1).is_err());
        assert!(BBox::new(0.5, 0.5, f64::INFINITY, 0.1).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let a = BBox::<f32>::new(0.5, 0.5, 0.2, 0.2).unwrap();
        let c = BBox::<f32>::new(0.6, 0.5, 0.2, 0.2).unwrap();
        assert!((iou(&a, &c) - 1.0 / 3.0).abs() < 1e-5);
    }

    fn unit_box() -> impl Strategy<Value = BBox<f64>> {
        (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y, w, h)| b(x, y, w, h))
    }

    proptest! {
        #[test]
        fn distances_symmetric_and_ordered(a in unit_box(), c in unit_box()) {
            let d = spatial_distance(&a, &c);
            prop_assert_eq!(d, spatial_distance(&c, &a));
            prop_assert_eq!(loc_score_boxes(&a, &c), loc_score_boxes(&c, &a));
            prop_assert!(-loc_score_boxes(&a, &c) >= d);
            prop_assert!(d >= 0.0);
        }

        #[test]
        fn distances_translation_consistent(
            x1 in 0.3..0.7f64, y1 in 0.3..0.7f64, x2 in 0.3..0.7f64, y2 in 0.3..0.7f64,
            w in 0.0..0.5f64, h in 0.0..0.5f64, dx in -0.25..0.25f64, dy in -0.25..0.25f64,
        ) {
            // Exact binary fractions keep the shift free of rounding.
            let q = |v: f64| (v * 1024.0).round() / 1024.0;
            let a = b(q(x1), q(y1), q(w), q(h));
            let c = b(q(x2), q(y2), q(h), q(w));
            let (dx, dy) = (q(dx), q(dy));
            let a2 = a.translated(dx, dy).unwrap();
            let c2 = c.translated(dx, dy).unwrap();
            prop_assert_eq!(spatial_distance(&a, &c), spatial_distance(&a2, &c2));
            prop_assert_eq!(loc_score_boxes(&a, &c), loc_score_boxes(&a2, &c2));
        }

        #[test]
        fn iou_symmetric_bounded_and_pixel_stable(
            a in unit_box(), c in unit_box(), fw in 100.0..4000.0f64, fh in 100.0..4000.0f64,
        ) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
            let a2 = PixelBox::from_bbox(&a, fw, fh).to_bbox().unwrap();
            let c2 = PixelBox::from_bbox(&c, fw, fh).to_bbox().unwrap();
            prop_assert!((iou(&a2, &c2) - v).abs() < 1e-6);
        }
    }
}
