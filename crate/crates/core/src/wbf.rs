//! Weighted boxes fusion.
//!
//! Boxes from every model are weighted, sorted by effective score and greedily
//! clustered: each box joins the first cluster whose current fused box overlaps
//! it by more than the match threshold, otherwise it opens a new cluster. A
//! cluster's fused box is the score-weighted mean of its members, its category
//! is the one with the largest summed score, and its confidence is the mean
//! member score rescaled by how many models agree.
//!
//! Model weights are divided by their maximum before use, so only their ratios
//! matter and an effective score never exceeds the raw confidence.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryId, Detection, ImageId, ModelRun, ScoredBox};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::scalar::Scalar;

/// How a cluster's mean score is scaled by the number of agreeing boxes `T` out of `N` models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceRescale {
    /// `conf * min(T, N) / N`
    #[default]
    MinTOverN,
    /// `conf * T / N`, clamped to 1
    TOverN,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WbfConfig<T> {
    /// A box joins a cluster when IoU with the fused box is strictly greater than this.
    pub iou_match_threshold: T,
    /// Boxes whose raw confidence is below this are dropped before clustering.
    pub skip_score_threshold: T,
    /// When false a box only joins clusters of its own category.
    pub category_agnostic_clustering: bool,
    pub confidence_rescale: ConfidenceRescale,
}

impl<T: Scalar> Default for WbfConfig<T> {
    fn default() -> Self {
        Self {
            iou_match_threshold: T::lit(0.55),
            skip_score_threshold: T::zero(),
            category_agnostic_clustering: true,
            confidence_rescale: ConfidenceRescale::MinTOverN,
        }
    }
}

impl<T: Scalar> WbfConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let thr = self.iou_match_threshold;
        if !(thr > T::zero() && thr <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "iou_match_threshold {thr} must lie in (0, 1]"
            )));
        }
        let skip = self.skip_score_threshold;
        if !(skip >= T::zero() && skip <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "skip_score_threshold {skip} must lie in [0, 1]"
            )));
        }
        Ok(())
    }
}

/// A detection tagged with its model and its weighted score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedBox<T> {
    pub detection: Detection<T>,
    pub model_index: usize,
    /// Position within its model's input list; the last tie-break.
    pub input_index: usize,
    effective_score: T,
}

impl<T: Scalar> WeightedBox<T> {
    /// `model_weight` is the (normalized) weight of the detection's model.
    pub fn new(
        detection: Detection<T>,
        model_index: usize,
        input_index: usize,
        model_weight: T,
    ) -> Self {
        Self {
            detection,
            model_index,
            input_index,
            effective_score: detection.confidence * model_weight,
        }
    }

    pub fn effective_score(&self) -> T {
        self.effective_score
    }

    /// Processing order: score descending, then model index, then input index.
    fn processing_order(&self, other: &Self) -> Ordering {
        other
            .effective_score
            .partial_cmp(&self.effective_score)
            .unwrap_or(Ordering::Equal)
            .then(self.model_index.cmp(&other.model_index))
            .then(self.input_index.cmp(&other.input_index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedBox<T> {
    pub bbox: BoundingBox<T>,
    pub category: CategoryId,
    pub confidence: T,
    /// Number of boxes fused into this one.
    pub member_count: usize,
    pub image: ImageId,
}

impl<T: Scalar> ScoredBox<T> for FusedBox<T> {
    fn bbox(&self) -> &BoundingBox<T> {
        &self.bbox
    }
    fn category(&self) -> CategoryId {
        self.category
    }
    fn confidence(&self) -> T {
        self.confidence
    }
}

impl<T: Scalar> From<FusedBox<T>> for Detection<T> {
    fn from(f: FusedBox<T>) -> Self {
        Detection::new(f.bbox, f.category, f.confidence, f.image)
    }
}

/// Working state during clustering. `fused` always holds the pre-rescale fusion of `members`.
#[derive(Debug, Clone)]
pub struct Cluster<T> {
    members: Vec<WeightedBox<T>>,
    fused: FusedBox<T>,
}

impl<T: Scalar> Cluster<T> {
    fn open(first: WeightedBox<T>) -> Result<Self> {
        let members = vec![first];
        let fused = fuse_cluster(&members)?;
        Ok(Self { members, fused })
    }

    fn push(&mut self, b: WeightedBox<T>) -> Result<()> {
        self.members.push(b);
        self.fused = fuse_cluster(&self.members)?;
        Ok(())
    }

    pub fn members(&self) -> &[WeightedBox<T>] {
        &self.members
    }

    pub fn fused(&self) -> &FusedBox<T> {
        &self.fused
    }
}

/// Score-weighted mean box of a cluster with its resolved category and
/// pre-rescale confidence `sum(scores) / T`.
pub fn fuse_cluster<T: Scalar>(members: &[WeightedBox<T>]) -> Result<FusedBox<T>> {
    let first = members.first().ok_or(Error::EmptyCluster)?;
    let total: T = members.iter().map(|m| m.effective_score).sum();
    if total <= T::zero() {
        return Err(Error::ZeroScoreCluster);
    }
    let mut acc = [T::zero(); 4];
    let mut lo = first.detection.bbox.coords();
    let mut hi = lo;
    for m in members {
        let c = m.detection.bbox.coords();
        for k in 0..4 {
            acc[k] += m.effective_score * c[k];
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    // Rounding can push a weighted mean an ulp outside its members.
    let coords = std::array::from_fn(|k| (acc[k] / total).clamp_to(lo[k], hi[k]));
    let count = members.len();
    let (category, _) = resolve_category(members);
    Ok(FusedBox {
        bbox: BoundingBox::from_coords(coords),
        category,
        confidence: (total / T::from_count(count)).clamp_to(T::zero(), T::one()),
        member_count: count,
        image: first.detection.image,
    })
}

/// Sums effective scores per category and returns the arg-max (smallest id on ties).
pub fn resolve_category<T: Scalar>(
    members: &[WeightedBox<T>],
) -> (CategoryId, BTreeMap<CategoryId, T>) {
    let mut scores: BTreeMap<CategoryId, T> = BTreeMap::new();
    for m in members {
        *scores.entry(m.detection.category).or_insert_with(T::zero) += m.effective_score;
    }
    let mut best: Option<(CategoryId, T)> = None;
    // BTreeMap iterates ids ascending, so strict `>` keeps the smallest id on ties.
    for (&cat, &s) in &scores {
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((cat, s));
        }
    }
    (best.map(|(c, _)| c).unwrap_or_default(), scores)
}

pub fn rescale_confidence<T: Scalar>(
    pre_conf: T,
    member_count: usize,
    num_models: usize,
    mode: ConfidenceRescale,
) -> T {
    let t = T::from_count(member_count);
    let n = T::from_count(num_models.max(1));
    match mode {
        ConfidenceRescale::MinTOverN if member_count >= num_models => pre_conf,
        ConfidenceRescale::MinTOverN => pre_conf * t / n,
        ConfidenceRescale::TOverN => (pre_conf * t / n).min(T::one()),
        ConfidenceRescale::None => pre_conf,
    }
}

/// Divides weights by their maximum after checking lengths and signs.
pub fn normalize_weights<T: Scalar>(weights: &[T], num_models: usize) -> Result<Vec<T>> {
    if num_models == 0 {
        return Err(Error::NoModels);
    }
    if weights.len() != num_models {
        return Err(Error::LengthMismatch {
            models: num_models,
            weights: weights.len(),
        });
    }
    if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < T::zero()) {
        return Err(Error::InvalidWeight(bad.as_f64()));
    }
    let max = weights.iter().copied().fold(T::zero(), T::max);
    if max <= T::zero() {
        return Err(Error::AllZeroWeights);
    }
    Ok(weights.iter().map(|&w| w / max).collect())
}

/// Fuses the detections of `N` models for a single image.
///
/// `per_model[i]` holds model `i`'s detections and is weighted by `weights[i]`.
pub fn weighted_boxes_fusion<T, D>(
    per_model: &[D],
    weights: &[T],
    cfg: &WbfConfig<T>,
) -> Result<Vec<FusedBox<T>>>
where
    T: Scalar,
    D: AsRef<[Detection<T>]>,
{
    cfg.validate()?;
    let norm = normalize_weights(weights, per_model.len())?;
    let mut boxes: Vec<WeightedBox<T>> = per_model
        .iter()
        .enumerate()
        .flat_map(|(m, dets)| {
            let w = norm[m];
            dets.as_ref()
                .iter()
                .enumerate()
                .map(move |(k, d)| WeightedBox::new(*d, m, k, w))
        })
        .filter(|b| {
            b.detection.confidence >= cfg.skip_score_threshold && b.effective_score > T::zero()
        })
        .collect();
    boxes.sort_by(WeightedBox::processing_order);

    let mut clusters: Vec<Cluster<T>> = Vec::new();
    for b in boxes {
        let target = clusters.iter().position(|c| {
            (cfg.category_agnostic_clustering || c.fused.category == b.detection.category)
                && iou(&c.fused.bbox, &b.detection.bbox) > cfg.iou_match_threshold
        });
        match target {
            Some(pos) => clusters[pos].push(b)?,
            None => clusters.push(Cluster::open(b)?),
        }
    }

    let n = per_model.len();
    Ok(clusters
        .into_iter()
        .map(|c| {
            let mut f = c.fused;
            f.confidence =
                rescale_confidence(f.confidence, f.member_count, n, cfg.confidence_rescale);
            f
        })
        .collect())
}

/// Fuses every image in `images` across the model runs.
pub fn fuse_runs<T: Scalar>(
    runs: &[ModelRun<T>],
    images: &BTreeSet<ImageId>,
    weights: &[T],
    cfg: &WbfConfig<T>,
) -> Result<BTreeMap<ImageId, Vec<FusedBox<T>>>> {
    // Surface configuration errors even when there are no images.
    cfg.validate()?;
    normalize_weights(weights, runs.len())?;
    images
        .iter()
        .map(|&img| {
            let per_model: Vec<&[Detection<T>]> = runs.iter().map(|r| r.for_image(img)).collect();
            weighted_boxes_fusion(&per_model, weights, cfg).map(|f| (img, f))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(coords: [f64; 4], cat: u64, conf: f64) -> Detection<f64> {
        Detection::new(
            BoundingBox::from_coords(coords),
            CategoryId(cat),
            conf,
            ImageId(0),
        )
    }

    fn wb(coords: [f64; 4], cat: u64, score: f64) -> WeightedBox<f64> {
        WeightedBox::new(det(coords, cat, score), 0, 0, 1.0)
    }

    #[test]
    fn single_box_passes_through() {
        let d = det([1.5, 2.0, 7.25, 9.0], 4, 0.73);
        let out = weighted_boxes_fusion(&[vec![d]], &[1.0], &WbfConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, d.bbox);
        assert_eq!(out[0].confidence, 0.73);
        assert_eq!(out[0].category, CategoryId(4));
        assert_eq!(out[0].member_count, 1);
    }

    #[test]
    fn identical_boxes_from_two_models_merge() {
        let d = det([0., 0., 10., 10.], 1, 0.8);
        let out =
            weighted_boxes_fusion(&[vec![d], vec![d]], &[1.0, 1.0], &WbfConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, d.bbox);
        assert!((out[0].confidence - 0.8).abs() < 1e-15);
        assert_eq!(out[0].member_count, 2);
    }

    #[test]
    fn three_model_worked_example() {
        // [0,0,10,10] vs [0,0,10,8]: IoU 0.8.
        let a = det([0., 0., 10., 10.], 1, 0.6);
        let b = det([0., 0., 10., 8.], 1, 0.4);
        let c = det([50., 50., 60., 60.], 1, 0.5);
        let out = weighted_boxes_fusion(
            &[vec![a], vec![b], vec![c]],
            &[1.0, 1.0, 1.0],
            &WbfConfig::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        let merged = out.iter().find(|f| f.member_count == 2).unwrap();
        let lone = out.iter().find(|f| f.member_count == 1).unwrap();
        assert!((merged.confidence - 1.0 / 3.0).abs() < 1e-12);
        assert!((lone.confidence - 1.0 / 6.0).abs() < 1e-12);
        // y_max = (0.6*10 + 0.4*8) / 1.0
        assert!((merged.bbox.y_max - 9.2).abs() < 1e-12);
    }

    #[test]
    fn fuse_cluster_weighted_mean() {
        let f =
            fuse_cluster(&[wb([0., 0., 5., 5.], 1, 0.9), wb([1., 0., 5., 5.], 1, 0.1)]).unwrap();
        assert!((f.bbox.x_min - 0.1).abs() < 1e-15);
        assert!((f.confidence - 0.5).abs() < 1e-15);

        let single = fuse_cluster(&[wb([1., 2., 3., 4.], 2, 0.3)]).unwrap();
        assert_eq!(single.bbox.coords(), [1., 2., 3., 4.]);
        assert_eq!(single.confidence, 0.3);

        let mid =
            fuse_cluster(&[wb([0., 0., 4., 4.], 1, 0.5), wb([2., 2., 6., 8.], 1, 0.5)]).unwrap();
        assert_eq!(mid.bbox.coords(), [1., 1., 5., 6.]);
    }

    #[test]
    fn fuse_cluster_rejects_empty_and_zero_scores() {
        assert!(matches!(fuse_cluster::<f64>(&[]), Err(Error::EmptyCluster)));
        assert!(matches!(
            fuse_cluster(&[wb([0., 0., 1., 1.], 1, 0.0)]),
            Err(Error::ZeroScoreCluster)
        ));
    }

    #[test]
    fn category_resolution() {
        let (c, _) = resolve_category(&[wb([0.; 4], 3, 0.2), wb([0.; 4], 3, 0.9)]);
        assert_eq!(c, CategoryId(3));
        let (c, scores) = resolve_category(&[
            wb([0.; 4], 1, 0.7),
            wb([0.; 4], 2, 0.4),
            wb([0.; 4], 2, 0.4),
        ]);
        assert_eq!(c, CategoryId(2));
        assert!((scores[&CategoryId(2)] - 0.8).abs() < 1e-15);
        let (c, _) = resolve_category(&[wb([0.; 4], 2, 0.5), wb([0.; 4], 1, 0.5)]);
        assert_eq!(c, CategoryId(1));
    }

    #[test]
    fn rescale_modes() {
        let m = ConfidenceRescale::MinTOverN;
        assert_eq!(rescale_confidence(0.37, 3, 3, m), 0.37);
        assert!((rescale_confidence(0.5f64, 2, 3, m) - 1.0 / 3.0).abs() < 1e-15);
        assert!((rescale_confidence(0.8f64, 1, 2, m) - 0.4).abs() < 1e-15);
        assert_eq!(rescale_confidence(0.8, 5, 2, m), 0.8);
        assert_eq!(
            rescale_confidence(0.8, 5, 2, ConfidenceRescale::TOverN),
            1.0
        );
        assert_eq!(rescale_confidence(0.8, 1, 2, ConfidenceRescale::None), 0.8);
    }

    #[test]
    fn rejects_bad_weights() {
        let d = vec![det([0., 0., 1., 1.], 1, 0.5)];
        let cfg = WbfConfig::default();
        assert!(matches!(
            weighted_boxes_fusion(&[d.clone(), d.clone()], &[1.0], &cfg),
            Err(Error::LengthMismatch {
                models: 2,
                weights: 1
            })
        ));
        assert!(matches!(
            weighted_boxes_fusion(std::slice::from_ref(&d), &[0.0], &cfg),
            Err(Error::AllZeroWeights)
        ));
        assert!(matches!(
            weighted_boxes_fusion(&[d], &[-1.0], &cfg),
            Err(Error::InvalidWeight(_))
        ));
    }

    #[test]
    fn zero_weight_model_is_ignored() {
        let a = det([0., 0., 10., 10.], 1, 0.6);
        let b = det([1., 1., 10., 10.], 1, 0.9);
        let out =
            weighted_boxes_fusion(&[vec![a], vec![b]], &[1.0, 0.0], &WbfConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, a.bbox);
    }

    #[test]
    fn strict_category_mode_keeps_classes_apart() {
        let a = det([0., 0., 10., 10.], 1, 0.6);
        let b = det([0., 0., 10., 10.], 2, 0.5);
        let strict = WbfConfig {
            category_agnostic_clustering: false,
            ..WbfConfig::default()
        };
        let out = weighted_boxes_fusion(&[vec![a], vec![b]], &[1.0, 1.0], &strict).unwrap();
        assert_eq!(out.len(), 2);
        let out =
            weighted_boxes_fusion(&[vec![a], vec![b]], &[1.0, 1.0], &WbfConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].category, CategoryId(1));
    }

    #[test]
    fn skip_threshold_drops_low_scores() {
        let cfg = WbfConfig {
            skip_score_threshold: 0.3,
            ..WbfConfig::default()
        };
        let out = weighted_boxes_fusion(
            &[vec![
                det([0., 0., 1., 1.], 1, 0.2),
                det([5., 5., 6., 6.], 1, 0.4),
            ]],
            &[1.0],
            &cfg,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.4);
    }

    #[test]
    fn config_validation() {
        let bad = WbfConfig {
            iou_match_threshold: 0.0,
            ..WbfConfig::<f64>::default()
        };
        assert!(bad.validate().is_err());
        let bad = WbfConfig {
            skip_score_threshold: 1.5,
            ..WbfConfig::<f64>::default()
        };
        assert!(bad.validate().is_err());
    }
}
