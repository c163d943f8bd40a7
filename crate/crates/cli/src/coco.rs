//! COCO annotation and results files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use boxfuse_core::dataset::Split;
use boxfuse_core::{
    BoundingBox, CategoryId, Dataset, Detection, GroundTruthBox, ImageId, ModelRun,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One rejected detection record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    /// Position in the results array.
    pub index: usize,
    pub reason: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}: {}", self.index, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    // the cause is part of the message, not a chained source, so it prints once
    #[error("{}: {cause}", path.display())]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },
    /// Malformed JSON or missing keys; serde reports line and column.
    #[error("{origin}: {cause}")]
    Json {
        origin: String,
        cause: serde_json::Error,
    },
    #[error(
        "{origin}: annotation {annotation} (index {index}) references unknown image_id {image_id}"
    )]
    UnknownImage {
        origin: String,
        index: usize,
        annotation: u64,
        image_id: u64,
    },
    #[error("{origin}: annotation {annotation} (index {index}) has invalid bbox {bbox:?}")]
    InvalidAnnotation {
        origin: String,
        index: usize,
        annotation: u64,
        bbox: [f64; 4],
    },
    #[error("{origin}: {} invalid record(s); first: {}", errors.len(), errors[0])]
    InvalidRecords {
        origin: String,
        errors: Vec<RecordError>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoGroundTruth {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, width, height]`
    pub bbox: [f64; 4],
    pub score: f64,
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|cause| IngestError::Io {
        path: path.to_path_buf(),
        cause,
    })
}

fn corner_box(b: [f64; 4]) -> Option<BoundingBox> {
    if b[2] < 0.0 || b[3] < 0.0 {
        return None;
    }
    BoundingBox::from_xywh(b[0], b[1], b[2], b[3]).ok()
}

pub fn parse_ground_truth(text: &str, origin: &str) -> Result<Dataset, IngestError> {
    let raw: CocoGroundTruth = serde_json::from_str(text).map_err(|cause| IngestError::Json {
        origin: origin.to_string(),
        cause,
    })?;
    ground_truth_from_coco(&raw, origin)
}

pub fn ground_truth_from_coco(raw: &CocoGroundTruth, origin: &str) -> Result<Dataset, IngestError> {
    let images: BTreeSet<ImageId> = raw.images.iter().map(|i| ImageId(i.id)).collect();
    let mut gts = Vec::with_capacity(raw.annotations.len());
    for (index, a) in raw.annotations.iter().enumerate() {
        if !images.contains(&ImageId(a.image_id)) {
            return Err(IngestError::UnknownImage {
                origin: origin.to_string(),
                index,
                annotation: a.id,
                image_id: a.image_id,
            });
        }
        let bbox = corner_box(a.bbox).ok_or_else(|| IngestError::InvalidAnnotation {
            origin: origin.to_string(),
            index,
            annotation: a.id,
            bbox: a.bbox,
        })?;
        gts.push(GroundTruthBox {
            bbox,
            category: CategoryId(a.category_id),
            image: ImageId(a.image_id),
        });
    }
    let categories = raw.categories.iter().map(|c| CategoryId(c.id));
    Ok(Dataset::new(images, gts, categories, Split::Validation))
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    parse_ground_truth(&read(path)?, &path.display().to_string())
}

/// Parses a results array. Every bad record is reported, not just the first.
pub fn parse_detections(
    text: &str,
    origin: &str,
    model_name: &str,
) -> Result<ModelRun, IngestError> {
    let raw: Vec<CocoResult> = serde_json::from_str(text).map_err(|cause| IngestError::Json {
        origin: origin.to_string(),
        cause,
    })?;
    let mut errors = Vec::new();
    let mut dets = Vec::with_capacity(raw.len());
    for (index, r) in raw.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.score) {
            errors.push(RecordError {
                index,
                reason: format!("score {} outside [0, 1]", r.score),
            });
            continue;
        }
        match corner_box(r.bbox) {
            Some(bbox) => dets.push(Detection::new(
                bbox,
                CategoryId(r.category_id),
                r.score,
                ImageId(r.image_id),
            )),
            None => errors.push(RecordError {
                index,
                reason: format!("bbox {:?} is not a valid [x, y, w, h] box", r.bbox),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::InvalidRecords {
            origin: origin.to_string(),
            errors,
        });
    }
    Ok(ModelRun::from_detections(model_name, dets))
}

pub fn load_detections(path: impl AsRef<Path>, model_name: &str) -> Result<ModelRun, IngestError> {
    let path = path.as_ref();
    parse_detections(&read(path)?, &path.display().to_string(), model_name)
}

/// Model name derived from a detections path: the file stem.
pub fn model_name_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    // avoid "-0.0" in output
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// COCO result record with 6 fractional digits. Corners are rounded before the
/// width and height are taken, so re-parsed corners stay within 1e-6.
pub fn to_result(d: &Detection) -> CocoResult {
    let [x0, y0, x1, y1] = d.bbox.coords().map(round6);
    CocoResult {
        image_id: d.image.0,
        category_id: d.category.0,
        bbox: [x0, y0, round6(x1 - x0), round6(y1 - y0)],
        score: round6(d.confidence),
    }
}

/// Results JSON for detections keyed by image, in image order then input order.
pub fn results_json<'a>(dets: impl IntoIterator<Item = &'a Detection>) -> String {
    let records: Vec<CocoResult> = dets.into_iter().map(to_result).collect();
    serde_json::to_string_pretty(&records).expect("results serialize")
}

pub fn run_to_json(run: &BTreeMap<ImageId, Vec<Detection>>) -> String {
    results_json(run.values().flatten())
}

/// Ground-truth file contents for a dataset (used by the synthetic generator).
pub fn ground_truth_to_coco(ds: &Dataset, width: f64, height: f64) -> CocoGroundTruth {
    let images = ds
        .images
        .iter()
        .map(|i| CocoImage {
            id: i.0,
            width: Some(width),
            height: Some(height),
            file_name: None,
        })
        .collect();
    let mut annotations = Vec::new();
    for gts in ds.ground_truth.values() {
        for g in gts {
            let [x0, y0, x1, y1] = g.bbox.coords().map(round6);
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: g.image.0,
                category_id: g.category.0,
                bbox: [x0, y0, round6(x1 - x0), round6(y1 - y0)],
            });
        }
    }
    let categories = ds
        .categories
        .iter()
        .map(|c| CocoCategory {
            id: c.0,
            name: format!("class_{}", c.0),
        })
        .collect();
    CocoGroundTruth {
        images,
        annotations,
        categories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": 1, "width": 100, "height": 100}],
        "annotations": [{"id": 7, "image_id": 1, "category_id": 3, "bbox": [10, 10, 20, 30]}],
        "categories": [{"id": 3, "name": "cup"}]
    }"#;

    #[test]
    fn minimal_ground_truth() {
        let ds = parse_ground_truth(MINIMAL, "mem").unwrap();
        assert_eq!(ds.num_ground_truth(), 1);
        let g = &ds.ground_truth_for(ImageId(1))[0];
        assert_eq!(g.bbox.coords(), [10.0, 10.0, 30.0, 40.0]);
        assert_eq!(g.category, CategoryId(3));
    }

    #[test]
    fn unknown_image_is_named() {
        let text = MINIMAL.replace("\"image_id\": 1", "\"image_id\": 42");
        let err = parse_ground_truth(&text, "gt.json").unwrap_err();
        assert!(matches!(
            err,
            IngestError::UnknownImage { image_id: 42, .. }
        ));
        assert!(err.to_string().contains("42"));
    }

    #[test]
    fn missing_key_reports_location() {
        let err =
            parse_ground_truth(r#"{"images": [], "annotations": []}"#, "gt.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("categories") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn detections() {
        let run = parse_detections("[]", "d", "m").unwrap();
        assert!(run.is_empty());
        let one = r#"[{"image_id": 1, "category_id": 2, "bbox": [0, 0, 5, 5], "score": 0.9}]"#;
        let run = parse_detections(one, "d", "m").unwrap();
        assert_eq!(run.for_image(ImageId(1))[0].confidence, 0.9);
    }

    #[test]
    fn bad_records_are_all_reported() {
        let text = r#"[
            {"image_id": 1, "category_id": 2, "bbox": [0, 0, 5, 5], "score": 1.2},
            {"image_id": 1, "category_id": 2, "bbox": [0, 0, 5, 5], "score": 0.5},
            {"image_id": 1, "category_id": 2, "bbox": [0, 0, -5, 5], "score": 0.5}
        ]"#;
        match parse_detections(text, "d.json", "m").unwrap_err() {
            IngestError::InvalidRecords { errors, .. } => {
                assert_eq!(
                    errors.iter().map(|e| e.index).collect::<Vec<_>>(),
                    vec![0, 2]
                );
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn written_corners_round_trip_within_1e6() {
        let d = Detection::new(
            BoundingBox::new(0.1234567891, 3.3333333333, 7.7777777777, 9.87654321).unwrap(),
            CategoryId(1),
            0.123456789,
            ImageId(5),
        );
        let text = results_json([&d]);
        let back = parse_detections(&text, "mem", "m").unwrap();
        let e = back.for_image(ImageId(5))[0];
        for (a, b) in e.bbox.coords().iter().zip(d.bbox.coords()) {
            assert!((a - b).abs() <= 1e-6, "{a} {b}");
        }
        assert!((e.confidence - d.confidence).abs() <= 1e-6);
    }
}
