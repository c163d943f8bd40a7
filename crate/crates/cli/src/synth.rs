//! Synthetic ground truth and detectors with controllable noise.

use boxfuse_core::dataset::Split;
use boxfuse_core::{
    iou, BoundingBox, CategoryId, Dataset, Detection, GroundTruthBox, ImageId, ModelRun,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("model {model}: {field} = {value} must lie in [0, 1]")]
    Rate {
        model: String,
        field: &'static str,
        value: f64,
    },
    #[error("model {model}: sigma = {value} must be finite and >= 0")]
    Sigma { model: String, value: f64 },
    #[error("{0}")]
    Layout(String),
}

/// How one synthetic detector distorts the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseProfile {
    pub name: String,
    /// Standard deviation of the Gaussian added to every corner coordinate.
    pub sigma: f64,
    /// Probability that a ground-truth object is not detected.
    pub miss_rate: f64,
    /// Probability, per ground-truth object, of one extra random box.
    pub fp_rate: f64,
    /// Confidence of a detection is `low + (high - low) * IoU + noise`, so better
    /// boxes tend to score higher.
    pub confidence_low: f64,
    pub confidence_high: f64,
    pub confidence_noise: f64,
    /// False positives score uniformly in this range.
    pub fp_confidence: [f64; 2],
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            name: "model".into(),
            sigma: 0.0,
            miss_rate: 0.0,
            fp_rate: 0.0,
            confidence_low: 0.05,
            confidence_high: 0.95,
            confidence_noise: 0.05,
            fp_confidence: [0.05, 0.6],
        }
    }
}

impl NoiseProfile {
    pub fn clean(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn noisy(name: &str, sigma: f64, miss_rate: f64, fp_rate: f64) -> Self {
        Self {
            name: name.into(),
            sigma,
            miss_rate,
            fp_rate,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SpecError> {
        let rate = |field, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SpecError::Rate {
                    model: self.name.clone(),
                    field,
                    value,
                })
            }
        };
        rate("miss_rate", self.miss_rate)?;
        rate("fp_rate", self.fp_rate)?;
        rate("confidence_low", self.confidence_low)?;
        rate("confidence_high", self.confidence_high)?;
        rate("fp_confidence[0]", self.fp_confidence[0])?;
        rate("fp_confidence[1]", self.fp_confidence[1])?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(SpecError::Sigma {
                model: self.name.clone(),
                value: self.sigma,
            });
        }
        if !(self.confidence_noise.is_finite() && self.confidence_noise >= 0.0)
            || self.fp_confidence[0] > self.fp_confidence[1]
        {
            return Err(SpecError::Layout(format!(
                "model {}: confidence settings are inconsistent",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub images: usize,
    pub categories: usize,
    /// Inclusive range of objects per image.
    pub boxes_per_image: [usize; 2],
    /// Images are square with this side.
    pub image_size: f64,
    /// Inclusive range of object side lengths.
    pub box_size: [f64; 2],
    /// Objects in one image overlap each other by at most this IoU.
    pub max_object_overlap: f64,
    pub models: Vec<NoiseProfile>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            images: 100,
            categories: 3,
            boxes_per_image: [1, 4],
            image_size: 512.0,
            box_size: [32.0, 128.0],
            max_object_overlap: 0.3,
            models: vec![
                NoiseProfile::clean("clean"),
                NoiseProfile::noisy("noisy_a", 8.0, 0.2, 0.3),
                NoiseProfile::noisy("noisy_b", 16.0, 0.3, 0.5),
            ],
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// One noise-free model and two noisy ones.
    pub fn planted(images: usize, seed: u64) -> Self {
        Self {
            images,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let [lo, hi] = self.boxes_per_image;
        if lo > hi || self.categories == 0 {
            return Err(SpecError::Layout(
                "need categories >= 1 and boxes_per_image[0] <= boxes_per_image[1]".into(),
            ));
        }
        let [s0, s1] = self.box_size;
        if !(s0 > 0.0 && s0 <= s1 && s1 <= self.image_size) {
            return Err(SpecError::Layout(format!(
                "box sizes [{s0}, {s1}] must be positive, ordered and fit in the image ({})",
                self.image_size
            )));
        }
        for m in &self.models {
            m.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub runs: Vec<ModelRun>,
}

/// Stream 0 draws the objects; model `m` uses stream `m + 1`, so each
/// detector is independent of the others and of the model count.
fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn random_box(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> BoundingBox {
    let [s0, s1] = spec.box_size;
    let w = rng.random_range(s0..=s1);
    let h = rng.random_range(s0..=s1);
    let x = rng.random_range(0.0..=spec.image_size - w);
    let y = rng.random_range(0.0..=spec.image_size - h);
    BoundingBox::from_coords([x, y, x + w, y + h])
}

fn objects(spec: &SyntheticSpec) -> Vec<GroundTruthBox> {
    let mut rng = stream(spec.seed, 0);
    let mut out = Vec::new();
    for img in 0..spec.images as u64 {
        let n = rng.random_range(spec.boxes_per_image[0]..=spec.boxes_per_image[1]);
        let mut placed: Vec<BoundingBox> = Vec::with_capacity(n);
        for _ in 0..n {
            for _attempt in 0..50 {
                let b = random_box(&mut rng, spec);
                if placed.iter().all(|p| iou(p, &b) <= spec.max_object_overlap) {
                    placed.push(b);
                    out.push(GroundTruthBox {
                        bbox: b,
                        category: CategoryId(rng.random_range(0..spec.categories as u64) + 1),
                        image: ImageId(img),
                    });
                    break;
                }
            }
        }
    }
    out
}

fn jitter(rng: &mut ChaCha8Rng, b: &BoundingBox, sigma: f64, limit: f64) -> BoundingBox {
    if sigma == 0.0 {
        return *b;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut c = b
        .coords()
        .map(|v| (v + normal.sample(rng)).clamp(0.0, limit));
    if c[2] < c[0] {
        c.swap(0, 2);
    }
    if c[3] < c[1] {
        c.swap(1, 3);
    }
    BoundingBox::from_coords(c)
}

fn detector(spec: &SyntheticSpec, gts: &[GroundTruthBox], index: usize) -> ModelRun {
    let p = &spec.models[index];
    let mut rng = stream(spec.seed, index as u64 + 1);
    let conf_noise =
        (p.confidence_noise > 0.0).then(|| Normal::new(0.0, p.confidence_noise).unwrap());
    let mut dets = Vec::new();
    for g in gts {
        // draws happen in a fixed order whatever the outcome
        let missed = rng.random::<f64>() < p.miss_rate;
        let b = jitter(&mut rng, &g.bbox, p.sigma, spec.image_size);
        let noise = conf_noise.map_or(0.0, |n| n.sample(&mut rng));
        if !missed {
            let q = iou(&b, &g.bbox);
            let conf = (p.confidence_low + (p.confidence_high - p.confidence_low) * q + noise)
                .clamp(0.001, 1.0);
            dets.push(Detection::new(b, g.category, conf, g.image));
        }
        if rng.random::<f64>() < p.fp_rate {
            let fp = random_box(&mut rng, spec);
            let cat = CategoryId(rng.random_range(0..spec.categories as u64) + 1);
            let [c0, c1] = p.fp_confidence;
            let conf = rng.random_range(c0..=c1);
            dets.push(Detection::new(fp, cat, conf, g.image));
        }
    }
    ModelRun::from_detections(p.name.clone(), dets)
}

/// Ground truth plus one detection run per noise profile; deterministic per seed.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData, SpecError> {
    spec.validate()?;
    let gts = objects(spec);
    let categories = (1..=spec.categories as u64).map(CategoryId);
    let runs = (0..spec.models.len())
        .map(|m| detector(spec, &gts, m))
        .collect();
    let dataset = Dataset::new(
        (0..spec.images as u64).map(ImageId),
        gts,
        categories,
        Split::Validation,
    );
    Ok(SyntheticData { dataset, runs })
}
