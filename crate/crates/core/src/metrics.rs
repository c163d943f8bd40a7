//! Detection evaluation: greedy TP/FP matching, precision/recall curves,
//! average precision and mAP at one or many IoU thresholds.
//!
//! Matching is done per image and category; the matches are then pooled over
//! all images and ranked by confidence to form one PR curve per category.
//! Categories without ground truth are ignored.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryId, Dataset, GroundTruthBox, ImageId, ScoredBox};
use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApScheme {
    /// Mean interpolated precision at recall 0.00, 0.01, ..., 1.00.
    #[default]
    Point101,
    /// Exact area under the monotone precision envelope.
    AllPoints,
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds<T: Scalar>() -> Vec<T> {
    (0..10)
        .map(|k| T::lit((50 + 5 * k) as f64 / 100.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig<T> {
    pub iou_thresholds: Vec<T>,
    pub scheme: ApScheme,
    /// Keep at most this many detections per image and category, highest confidence first.
    pub max_detections: Option<usize>,
}

impl<T: Scalar> Default for EvalConfig<T> {
    fn default() -> Self {
        Self {
            iou_thresholds: coco_iou_thresholds(),
            scheme: ApScheme::Point101,
            max_detections: None,
        }
    }
}

impl<T: Scalar> EvalConfig<T> {
    pub fn single_threshold(thr: T) -> Self {
        Self {
            iou_thresholds: vec![thr],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::InvalidConfig("no IoU thresholds given".into()));
        }
        if let Some(t) = self
            .iou_thresholds
            .iter()
            .find(|t| !(**t > T::zero() && **t <= T::one()))
        {
            return Err(Error::InvalidConfig(format!(
                "IoU threshold {t} must lie in (0, 1]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    /// TP flag for each detection, in input order.
    pub is_true_positive: Vec<bool>,
    /// Whether each ground-truth box was claimed.
    pub gt_matched: Vec<bool>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Indices of `dets` by descending confidence, ties in input order.
fn confidence_rank<T: Scalar, D: ScoredBox<T>>(dets: &[D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence()
            .partial_cmp(&dets[a].confidence())
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Greedy matching over detections ranked by confidence, given `ious[d][g]`
/// in ranked order. Returns the TP flag per ranked detection.
fn greedy_match<T: Scalar>(ious: &[Vec<T>], num_gt: usize, thr: T) -> (Vec<bool>, Vec<bool>) {
    let mut taken = vec![false; num_gt];
    let tp = ious
        .iter()
        .map(|row| {
            let mut best: Option<(usize, T)> = None;
            for (g, &v) in row.iter().enumerate() {
                if !taken[g] && v >= thr && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    (tp, taken)
}

/// Matches one image's detections of one category against its ground truth.
pub fn match_detections<T: Scalar, D: ScoredBox<T>>(
    dets: &[D],
    gts: &[GroundTruthBox<T>],
    iou_threshold: T,
) -> MatchOutcome {
    let order = confidence_rank(dets);
    let ious: Vec<Vec<T>> = order
        .iter()
        .map(|&d| gts.iter().map(|g| iou(dets[d].bbox(), &g.bbox)).collect())
        .collect();
    let (ranked_tp, gt_matched) = greedy_match(&ious, gts.len(), iou_threshold);
    let mut is_true_positive = vec![false; dets.len()];
    for (&d, &tp) in order.iter().zip(&ranked_tp) {
        is_true_positive[d] = tp;
    }
    let tp = ranked_tp.iter().filter(|&&t| t).count();
    MatchOutcome {
        is_true_positive,
        gt_matched,
        true_positives: tp,
        false_positives: dets.len() - tp,
        false_negatives: gts.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint<T> {
    pub recall: T,
    pub precision: T,
}

/// Precision/recall after each detection, in descending confidence order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve<T> {
    pub points: Vec<PrPoint<T>>,
}

impl<T: Scalar> PrCurve<T> {
    /// Builds the curve from TP flags already sorted by descending confidence.
    /// With no ground truth every recall is taken as 0.
    pub fn from_ranked(flags: impl IntoIterator<Item = bool>, num_gt: usize) -> Self {
        let n_gt = T::from_count(num_gt);
        let (mut tp, mut seen) = (0usize, 0usize);
        let points = flags
            .into_iter()
            .map(|is_tp| {
                seen += 1;
                tp += usize::from(is_tp);
                let t = T::from_count(tp);
                PrPoint {
                    recall: if num_gt == 0 { T::zero() } else { t / n_gt },
                    precision: t / T::from_count(seen),
                }
            })
            .collect();
        Self { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area under the PR curve under the chosen interpolation.
pub fn average_precision<T: Scalar>(curve: &PrCurve<T>, scheme: ApScheme) -> T {
    let pts = &curve.points;
    if pts.is_empty() {
        return T::zero();
    }
    // envelope[i] = max precision over points i..
    let mut envelope: Vec<T> = pts.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match scheme {
        ApScheme::Point101 => {
            let mut sum = T::zero();
            let mut idx = 0;
            for k in 0..=100 {
                let r = T::lit(k as f64 / 100.0);
                // recall is non-decreasing, so the first index reaching r only moves forward
                while idx < pts.len() && pts[idx].recall < r {
                    idx += 1;
                }
                if idx == pts.len() {
                    break;
                }
                sum += envelope[idx];
            }
            sum / T::from_count(101)
        }
        ApScheme::AllPoints => {
            let mut area = T::zero();
            let mut prev_recall = T::zero();
            for (p, &env) in pts.iter().zip(&envelope) {
                if p.recall > prev_recall {
                    area += (p.recall - prev_recall) * env;
                    prev_recall = p.recall;
                }
            }
            area
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub iou_thresholds: Vec<T>,
    /// AP per category, one entry per configured threshold.
    pub per_category_ap: BTreeMap<CategoryId, Vec<T>>,
    /// mAP at each configured threshold.
    pub map_per_threshold: Vec<T>,
    /// mAP at IoU 0.50.
    pub map50: T,
    /// Mean of `map_per_threshold` (0.50:0.05:0.95 with the default config).
    pub map50_95: T,
    /// PR curve per category at IoU 0.50.
    pub pr_curves: BTreeMap<CategoryId, PrCurve<T>>,
}

/// Ranked per-image matching state for one category.
struct ImageCategory<T> {
    image: ImageId,
    confidences: Vec<T>,
    ious: Vec<Vec<T>>,
    num_gt: usize,
}

struct PooledCategory<T> {
    images: Vec<ImageCategory<T>>,
    num_gt: usize,
}

impl<T: Scalar> PooledCategory<T> {
    /// One PR curve from matches pooled over images, ranked by confidence
    /// (ties by image id, then rank inside the image).
    fn curve(&self, thr: T) -> PrCurve<T> {
        let mut ranked: Vec<(T, ImageId, usize, bool)> = Vec::new();
        for ic in &self.images {
            let (tp, _) = greedy_match(&ic.ious, ic.num_gt, thr);
            ranked.extend(
                ic.confidences
                    .iter()
                    .zip(tp)
                    .enumerate()
                    .map(|(k, (&c, t))| (c, ic.image, k, t)),
            );
        }
        ranked.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        PrCurve::from_ranked(ranked.into_iter().map(|r| r.3), self.num_gt)
    }
}

fn pool_category<T: Scalar, D: ScoredBox<T>>(
    dets: &BTreeMap<ImageId, Vec<D>>,
    ds: &Dataset<T>,
    category: CategoryId,
    max_dets: Option<usize>,
) -> PooledCategory<T> {
    let mut images = Vec::new();
    let mut num_gt = 0;
    for &image in &ds.images {
        let gts: Vec<&GroundTruthBox<T>> = ds
            .ground_truth_for(image)
            .iter()
            .filter(|g| g.category == category)
            .collect();
        num_gt += gts.len();
        let cat_dets: Vec<&D> = dets
            .get(&image)
            .map(|v| v.iter().filter(|d| d.category() == category).collect())
            .unwrap_or_default();
        if cat_dets.is_empty() {
            continue;
        }
        let mut order = confidence_rank(&cat_dets);
        if let Some(k) = max_dets {
            order.truncate(k);
        }
        images.push(ImageCategory {
            image,
            confidences: order.iter().map(|&d| cat_dets[d].confidence()).collect(),
            ious: order
                .iter()
                .map(|&d| {
                    gts.iter()
                        .map(|g| iou(cat_dets[d].bbox(), &g.bbox))
                        .collect()
                })
                .collect(),
            num_gt: gts.len(),
        });
    }
    PooledCategory { images, num_gt }
}

fn mean<T: Scalar>(xs: impl ExactSizeIterator<Item = T>) -> T {
    let n = xs.len();
    if n == 0 {
        T::zero()
    } else {
        xs.sum::<T>() / T::from_count(n)
    }
}

/// Evaluates detections (keyed by image) against `ds`. Detections on images
/// outside the dataset and in categories without ground truth are ignored.
pub fn evaluate<T: Scalar, D: ScoredBox<T>>(
    dets: &BTreeMap<ImageId, Vec<D>>,
    ds: &Dataset<T>,
    cfg: &EvalConfig<T>,
) -> Result<EvalReport<T>> {
    cfg.validate()?;
    let half = T::lit(0.5);
    let categories = ds.categories_with_ground_truth();
    let mut per_category_ap = BTreeMap::new();
    let mut ap50 = Vec::with_capacity(categories.len());
    let mut pr_curves = BTreeMap::new();
    for &cat in &categories {
        let pooled = pool_category(dets, ds, cat, cfg.max_detections);
        let aps: Vec<T> = cfg
            .iou_thresholds
            .iter()
            .map(|&t| average_precision(&pooled.curve(t), cfg.scheme))
            .collect();
        let curve50 = pooled.curve(half);
        let pos50 = cfg.iou_thresholds.iter().position(|&t| t == half);
        ap50.push(match pos50 {
            Some(p) => aps[p],
            None => average_precision(&curve50, cfg.scheme),
        });
        pr_curves.insert(cat, curve50);
        per_category_ap.insert(cat, aps);
    }
    let map_per_threshold: Vec<T> = (0..cfg.iou_thresholds.len())
        .map(|k| mean(per_category_ap.values().map(|aps: &Vec<T>| aps[k])))
        .collect();
    Ok(EvalReport {
        iou_thresholds: cfg.iou_thresholds.clone(),
        per_category_ap,
        map50: mean(ap50.into_iter()),
        map50_95: mean(map_per_threshold.iter().copied()),
        map_per_threshold,
        pr_curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Detection, Split};
    use crate::geometry::BoundingBox;

    fn bb(c: [f64; 4]) -> BoundingBox<f64> {
        BoundingBox::from_coords(c)
    }

    fn det(c: [f64; 4], conf: f64) -> Detection<f64> {
        Detection::new(bb(c), CategoryId(1), conf, ImageId(0))
    }

    fn gt(c: [f64; 4]) -> GroundTruthBox<f64> {
        GroundTruthBox {
            bbox: bb(c),
            category: CategoryId(1),
            image: ImageId(0),
        }
    }

    #[test]
    fn single_true_positive() {
        // IoU 0.9
        let m = match_detections(
            &[det([0., 0., 10., 9.], 0.7)],
            &[gt([0., 0., 10., 10.])],
            0.5,
        );
        assert_eq!(
            (m.true_positives, m.false_positives, m.false_negatives),
            (1, 0, 0)
        );
    }

    #[test]
    fn no_detections() {
        let m = match_detections::<f64, Detection<f64>>(
            &[],
            &[gt([0., 0., 1., 1.]), gt([2., 2., 3., 3.])],
            0.5,
        );
        assert_eq!(
            (m.true_positives, m.false_positives, m.false_negatives),
            (0, 0, 2)
        );
    }

    #[test]
    fn consumed_ground_truth_turns_later_detection_into_fp() {
        // second detection is listed first to check confidence ordering
        let dets = [det([0., 0., 10., 6.], 0.8), det([0., 0., 10., 8.], 0.9)];
        let m = match_detections(&dets, &[gt([0., 0., 10., 10.])], 0.5);
        assert_eq!(m.is_true_positive, vec![false, true]);
        assert_eq!(
            (m.true_positives, m.false_positives, m.false_negatives),
            (1, 1, 0)
        );
    }

    #[test]
    fn highest_iou_ground_truth_wins() {
        let gts = [gt([0., 0., 10., 10.]), gt([0., 0., 10., 8.])];
        let m = match_detections(&[det([0., 0., 10., 8.], 0.9)], &gts, 0.5);
        assert_eq!(m.gt_matched, vec![false, true]);
    }

    #[test]
    fn worked_101_point_example() {
        let curve = PrCurve::<f64>::from_ranked([true, false], 2);
        assert_eq!(
            curve.points[0],
            PrPoint {
                recall: 0.5,
                precision: 1.0
            }
        );
        assert_eq!(
            curve.points[1],
            PrPoint {
                recall: 0.5,
                precision: 0.5
            }
        );
        assert_eq!(average_precision(&curve, ApScheme::Point101), 51.0 / 101.0);
        assert_eq!(average_precision(&curve, ApScheme::AllPoints), 0.5);
    }

    #[test]
    fn ap_extremes() {
        let perfect = PrCurve::<f64>::from_ranked([true, true, true], 3);
        assert_eq!(average_precision(&perfect, ApScheme::Point101), 1.0);
        assert_eq!(average_precision(&perfect, ApScheme::AllPoints), 1.0);
        let none = PrCurve::<f64>::from_ranked([false, false], 3);
        assert_eq!(average_precision(&none, ApScheme::Point101), 0.0);
        assert_eq!(
            average_precision(&PrCurve::<f64>::default(), ApScheme::AllPoints),
            0.0
        );
    }

    #[test]
    fn all_points_uses_envelope() {
        // TP FP TP with 2 gt: (0.5,1) (0.5,.5) (1,2/3)
        let c = PrCurve::<f64>::from_ranked([true, false, true], 2);
        let ap = average_precision(&c, ApScheme::AllPoints);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    fn dataset(gts: Vec<GroundTruthBox<f64>>) -> Dataset<f64> {
        Dataset::new([ImageId(0)], gts, [], Split::Validation)
    }

    #[test]
    fn perfect_detections_score_one() {
        let gts = vec![gt([0., 0., 10., 10.]), gt([20., 20., 30., 35.])];
        let dets: BTreeMap<_, _> = [(
            ImageId(0),
            gts.iter()
                .map(|g| Detection::new(g.bbox, g.category, 1.0, g.image))
                .collect::<Vec<_>>(),
        )]
        .into();
        let r = evaluate(&dets, &dataset(gts), &EvalConfig::default()).unwrap();
        assert_eq!(r.map50, 1.0);
        assert_eq!(r.map50_95, 1.0);
    }

    #[test]
    fn empty_detections_score_zero() {
        let dets: BTreeMap<ImageId, Vec<Detection<f64>>> = BTreeMap::new();
        let r = evaluate(
            &dets,
            &dataset(vec![gt([0., 0., 1., 1.])]),
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(r.map50, 0.0);
        assert_eq!(r.map50_95, 0.0);
    }

    #[test]
    fn categories_without_ground_truth_are_ignored() {
        let gts = vec![gt([0., 0., 10., 10.])];
        let mut stray = det([50., 50., 60., 60.], 0.99);
        stray.category = CategoryId(9);
        let dets: BTreeMap<_, _> = [(ImageId(0), vec![stray, det([0., 0., 10., 10.], 0.5)])].into();
        let r = evaluate(&dets, &dataset(gts), &EvalConfig::default()).unwrap();
        assert_eq!(r.map50, 1.0);
        assert_eq!(r.per_category_ap.len(), 1);
    }

    #[test]
    fn max_detections_cap() {
        let gts = vec![gt([0., 0., 10., 10.])];
        let dets: BTreeMap<_, _> = [(
            ImageId(0),
            vec![det([50., 50., 60., 60.], 0.9), det([0., 0., 10., 10.], 0.5)],
        )]
        .into();
        let cfg = EvalConfig {
            max_detections: Some(1),
            ..EvalConfig::default()
        };
        assert_eq!(evaluate(&dets, &dataset(gts), &cfg).unwrap().map50, 0.0);
    }

    #[test]
    fn rejects_bad_thresholds() {
        let dets: BTreeMap<ImageId, Vec<Detection<f64>>> = BTreeMap::new();
        let ds = dataset(vec![]);
        let cfg = EvalConfig {
            iou_thresholds: vec![],
            ..EvalConfig::default()
        };
        assert!(evaluate(&dets, &ds, &cfg).is_err());
        let cfg = EvalConfig::single_threshold(1.5);
        assert!(evaluate(&dets, &ds, &cfg).is_err());
    }

    #[test]
    fn coco_thresholds() {
        let t: Vec<f64> = coco_iou_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
    }
}
