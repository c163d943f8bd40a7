//! Axis-aligned boxes in corner form and the overlap primitives built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned rectangle stored as `(x_min, y_min, x_max, y_max)`.
///
/// Fields are public so that ingestion can hold raw, possibly invalid, boxes
/// long enough to report them; [`BoundingBox::new`] is the checked constructor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox {
                x_min: x_min.as_f64(),
                y_min: y_min.as_f64(),
                x_max: x_max.as_f64(),
                y_max: y_max.as_f64(),
            })
        }
    }

    /// Converts COCO `[x, y, w, h]` into corner form.
    pub fn from_xywh(x: T, y: T, w: T, h: T) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn to_xywh(&self) -> [T; 4] {
        [
            self.x_min,
            self.y_min,
            self.x_max - self.x_min,
            self.y_max - self.y_min,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.x_min.is_finite()
            && self.y_min.is_finite()
            && self.x_max.is_finite()
            && self.y_max.is_finite()
    }

    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.x_min <= self.x_max && self.y_min <= self.y_max
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        box_area(self)
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            x_min: self.x_min * factor,
            y_min: self.y_min * factor,
            x_max: self.x_max * factor,
            y_max: self.y_max * factor,
        }
    }

    pub fn coords(&self) -> [T; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn from_coords(c: [T; 4]) -> Self {
        Self {
            x_min: c[0],
            y_min: c[1],
            x_max: c[2],
            y_max: c[3],
        }
    }

    pub fn iou(&self, other: &Self) -> T {
        iou(self, other)
    }
}

pub fn box_area<T: Scalar>(b: &BoundingBox<T>) -> T {
    (b.x_max - b.x_min) * (b.y_max - b.y_min)
}

pub fn intersection_area<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(T::zero());
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(T::zero());
    w * h
}

/// Intersection over union. A zero union (two degenerate boxes) yields 0.
pub fn iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let inter = intersection_area(a, b);
    let union = box_area(a) + box_area(b) - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).clamp_to(T::zero(), T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(c: [f64; 4]) -> BoundingBox<f64> {
        BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap()
    }

    #[test]
    fn worked_iou_examples() {
        let b = bb([3.0, 4.0, 10.0, 12.5]);
        assert_eq!(iou(&b, &b), 1.0);
        assert_eq!(iou(&bb([0., 0., 1., 1.]), &bb([5., 5., 6., 6.])), 0.0);
        let v = iou(&bb([0., 0., 2., 2.]), &bb([1., 1., 3., 3.]));
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn areas() {
        assert_eq!(bb([0., 0., 0., 0.]).area(), 0.0);
        assert_eq!(bb([0., 0., 2., 3.]).area(), 6.0);
        assert_eq!(bb([1., 1., 2., 2.]).area(), 1.0);
    }

    #[test]
    fn degenerate_boxes_have_zero_iou() {
        let p = bb([1., 1., 1., 1.]);
        assert_eq!(iou(&p, &p), 0.0);
        let line = bb([0., 0., 5., 0.]);
        assert_eq!(iou(&line, &bb([0., 0., 5., 5.])), 0.0);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        assert_eq!(iou(&bb([0., 0., 1., 1.]), &bb([1., 0., 2., 1.])), 0.0);
    }

    #[test]
    fn rejects_inverted_and_non_finite() {
        assert!(BoundingBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn xywh_conversion() {
        let b = BoundingBox::from_xywh(10.0, 10.0, 20.0, 30.0).unwrap();
        assert_eq!(b.coords(), [10.0, 10.0, 30.0, 40.0]);
        assert_eq!(b.to_xywh(), [10.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let a = BoundingBox::<f32>::new(0., 0., 2., 2.).unwrap();
        let b = BoundingBox::<f32>::new(1., 1., 3., 3.).unwrap();
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-6);
    }
}
