//! Detections, ground truth, per-model runs and datasets, plus input validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;
use crate::scalar::Scalar;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ImageId(pub u64);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct CategoryId(pub u64);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub bbox: BoundingBox<T>,
    pub category: CategoryId,
    pub confidence: T,
    pub image: ImageId,
}

impl<T: Scalar> Detection<T> {
    pub fn new(bbox: BoundingBox<T>, category: CategoryId, confidence: T, image: ImageId) -> Self {
        Self {
            bbox,
            category,
            confidence,
            image,
        }
    }

    pub fn has_valid_confidence(&self) -> bool {
        self.confidence >= T::zero() && self.confidence <= T::one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox<T> {
    pub bbox: BoundingBox<T>,
    pub category: CategoryId,
    pub image: ImageId,
}

/// Anything that can be scored against ground truth: raw detections and fused boxes.
pub trait ScoredBox<T> {
    fn bbox(&self) -> &BoundingBox<T>;
    fn category(&self) -> CategoryId;
    fn confidence(&self) -> T;
}

impl<T: Scalar> ScoredBox<T> for Detection<T> {
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

impl<T: Scalar, D: ScoredBox<T>> ScoredBox<T> for &D {
    fn bbox(&self) -> &BoundingBox<T> {
        (*self).bbox()
    }
    fn category(&self) -> CategoryId {
        (*self).category()
    }
    fn confidence(&self) -> T {
        (*self).confidence()
    }
}

/// One detector's detections over a dataset, grouped by image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun<T> {
    pub model_name: String,
    pub detections: BTreeMap<ImageId, Vec<Detection<T>>>,
}

impl<T: Scalar> ModelRun<T> {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            detections: BTreeMap::new(),
        }
    }

    /// Groups detections by their own image id, preserving input order within an image.
    pub fn from_detections(
        model_name: impl Into<String>,
        dets: impl IntoIterator<Item = Detection<T>>,
    ) -> Self {
        let mut run = Self::new(model_name);
        for d in dets {
            run.detections.entry(d.image).or_default().push(d);
        }
        run
    }

    pub fn for_image(&self, image: ImageId) -> &[Detection<T>] {
        self.detections.get(&image).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.detections.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps only the images in `images`.
    pub fn restricted_to(&self, images: &BTreeSet<ImageId>) -> Self {
        Self {
            model_name: self.model_name.clone(),
            detections: self
                .detections
                .iter()
                .filter(|(k, _)| images.contains(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub images: BTreeSet<ImageId>,
    pub ground_truth: BTreeMap<ImageId, Vec<GroundTruthBox<T>>>,
    pub categories: BTreeSet<CategoryId>,
    pub split: Split,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset, adding any image or category referenced by ground truth.
    pub fn new(
        images: impl IntoIterator<Item = ImageId>,
        ground_truth: impl IntoIterator<Item = GroundTruthBox<T>>,
        categories: impl IntoIterator<Item = CategoryId>,
        split: Split,
    ) -> Self {
        let mut images: BTreeSet<ImageId> = images.into_iter().collect();
        let mut categories: BTreeSet<CategoryId> = categories.into_iter().collect();
        let mut gt: BTreeMap<ImageId, Vec<GroundTruthBox<T>>> = BTreeMap::new();
        for g in ground_truth {
            images.insert(g.image);
            categories.insert(g.category);
            gt.entry(g.image).or_default().push(g);
        }
        Self {
            images,
            ground_truth: gt,
            categories,
            split,
        }
    }

    pub fn ground_truth_for(&self, image: ImageId) -> &[GroundTruthBox<T>] {
        self.ground_truth.get(&image).map_or(&[], Vec::as_slice)
    }

    pub fn num_ground_truth(&self) -> usize {
        self.ground_truth.values().map(Vec::len).sum()
    }

    /// Categories with at least one ground-truth instance.
    pub fn categories_with_ground_truth(&self) -> BTreeSet<CategoryId> {
        self.ground_truth
            .values()
            .flatten()
            .map(|g| g.category)
            .collect()
    }

    /// Sub-dataset over the given images (ids absent from `self` are ignored).
    pub fn subset(&self, images: &BTreeSet<ImageId>, split: Split) -> Self {
        let images: BTreeSet<ImageId> = self.images.intersection(images).copied().collect();
        let ground_truth = self
            .ground_truth
            .iter()
            .filter(|(k, _)| images.contains(k))
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        Self {
            images,
            ground_truth,
            categories: self.categories.clone(),
            split,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    UnknownImage,
    ConfidenceOutOfRange,
    InvertedBox,
    NonFiniteCoordinate,
    ImageKeyMismatch,
    UnknownCategory,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FindingKind::UnknownImage => "unknown image",
            FindingKind::ConfidenceOutOfRange => "confidence out of range",
            FindingKind::InvertedBox => "inverted box",
            FindingKind::NonFiniteCoordinate => "non-finite coordinate",
            FindingKind::ImageKeyMismatch => "detection filed under the wrong image",
            FindingKind::UnknownCategory => "ground-truth category not declared",
        };
        f.write_str(s)
    }
}

/// One kind of violation in one source (`"ground_truth"` or a model name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub source: String,
    pub kind: FindingKind,
    pub count: usize,
    /// Human-readable location of the first offending record.
    pub first: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn count(&self, kind: FindingKind) -> usize {
        self.findings
            .iter()
            .filter(|f| f.kind == kind)
            .map(|f| f.count)
            .sum()
    }

    fn record(&mut self, source: &str, kind: FindingKind, location: impl FnOnce() -> String) {
        if let Some(f) = self
            .findings
            .iter_mut()
            .find(|f| f.kind == kind && f.source == source)
        {
            f.count += 1;
        } else {
            self.findings.push(Finding {
                source: source.to_owned(),
                kind,
                count: 1,
                first: location(),
            });
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(
                f,
                "{}: {} x{} (first at {})",
                finding.source, finding.kind, finding.count, finding.first
            )?;
        }
        Ok(())
    }
}

fn check_box<T: Scalar>(
    report: &mut ValidationReport,
    source: &str,
    b: &BoundingBox<T>,
    location: impl Fn() -> String,
) {
    if !b.is_finite() {
        report.record(source, FindingKind::NonFiniteCoordinate, &location);
    } else if b.x_min > b.x_max || b.y_min > b.y_max {
        report.record(source, FindingKind::InvertedBox, &location);
    }
}

/// Collects every invariant violation in the dataset and the model runs.
pub fn validate_dataset<T: Scalar>(ds: &Dataset<T>, runs: &[ModelRun<T>]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let gt_source = "ground_truth";
    for (image, gts) in &ds.ground_truth {
        for (k, g) in gts.iter().enumerate() {
            let loc = || format!("image {image}, annotation #{k}");
            if !ds.images.contains(&g.image) || g.image != *image {
                report.record(gt_source, FindingKind::UnknownImage, loc);
            }
            if !ds.categories.contains(&g.category) {
                report.record(gt_source, FindingKind::UnknownCategory, loc);
            }
            check_box(&mut report, gt_source, &g.bbox, loc);
        }
    }
    for run in runs {
        let source = run.model_name.as_str();
        for (image, dets) in &run.detections {
            for (k, d) in dets.iter().enumerate() {
                let loc = || format!("image {image}, detection #{k}");
                if d.image != *image {
                    report.record(source, FindingKind::ImageKeyMismatch, loc);
                }
                if !ds.images.contains(&d.image) {
                    report.record(source, FindingKind::UnknownImage, loc);
                }
                if !d.has_valid_confidence() {
                    report.record(source, FindingKind::ConfidenceOutOfRange, loc);
                }
                check_box(&mut report, source, &d.bbox, loc);
            }
        }
    }
    report
}
