//! Plain non-maximum suppression over pooled model outputs, as a baseline.

use boxfuse_core::{iou, Detection};

/// Keeps the highest-confidence box of every overlapping group. A box is
/// suppressed when it overlaps a kept box of the same category by more than
/// `iou_threshold`. Ties in confidence keep input order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = &dets[i];
        let suppressed = kept
            .iter()
            .any(|k| k.category == d.category && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}

/// NMS over the concatenation of several models' detections for one image.
pub fn nms_models<D: AsRef<[Detection]>>(per_model: &[D], iou_threshold: f64) -> Vec<Detection> {
    let pooled: Vec<Detection> = per_model
        .iter()
        .flat_map(|m| m.as_ref().iter().copied())
        .collect();
    nms(&pooled, iou_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use boxfuse_core::{BoundingBox, CategoryId, ImageId};

    fn d(c: [f64; 4], cat: u64, conf: f64) -> Detection {
        Detection::new(
            BoundingBox::from_coords(c),
            CategoryId(cat),
            conf,
            ImageId(0),
        )
    }

    #[test]
    fn suppresses_lower_overlapping_box() {
        let out = nms(
            &[
                d([0., 0., 10., 10.], 1, 0.6),
                d([0., 0., 10., 9.], 1, 0.9),
                d([50., 50., 60., 60.], 1, 0.3),
            ],
            0.5,
        );
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].confidence, 0.9);
        assert_eq!(out[1].confidence, 0.3);
    }

    #[test]
    fn other_categories_survive() {
        let out = nms(
            &[d([0., 0., 10., 10.], 1, 0.6), d([0., 0., 10., 10.], 2, 0.5)],
            0.5,
        );
        assert_eq!(out.len(), 2);
    }
}
