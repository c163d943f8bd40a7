//! Seeded random instances for property and oracle tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Coords, DetRecord, GtRecord, InputBox};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Valid box with corners in `[0, extent]`, sides at least `min_side`.
pub fn random_box<R: Rng>(rng: &mut R, extent: f64, min_side: f64) -> Coords {
    let w = rng.random_range(min_side..extent / 2.0);
    let h = rng.random_range(min_side..extent / 2.0);
    let x = rng.random_range(0.0..extent - w);
    let y = rng.random_range(0.0..extent - h);
    [x, y, x + w, y + h]
}

/// `base` with every edge moved by up to `amount` (kept valid).
pub fn jitter<R: Rng>(rng: &mut R, base: &Coords, amount: f64) -> Coords {
    let mut c = *base;
    for v in &mut c {
        *v += rng.random_range(-amount..=amount);
    }
    if c[2] < c[0] {
        c.swap(0, 2);
    }
    if c[3] < c[1] {
        c.swap(1, 3);
    }
    c
}

/// Pair of boxes that overlap often: the second is either independent or a jittered copy.
pub fn box_pair<R: Rng>(rng: &mut R) -> (Coords, Coords) {
    let a = random_box(rng, 100.0, 0.5);
    let b = if rng.random_bool(0.5) {
        jitter(rng, &a, 5.0)
    } else {
        random_box(rng, 100.0, 0.5)
    };
    (a, b)
}

/// Confidence in (0, 1], sometimes quantized to force ties.
fn confidence<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.3) {
        rng.random_range(1..=10) as f64 / 10.0
    } else {
        rng.random_range(0.01..=1.0)
    }
}

pub struct WbfInstance {
    pub per_model: Vec<Vec<InputBox>>,
    pub weights: Vec<f64>,
}

/// Up to `max_models` models and `max_boxes` boxes in total, scattered around a
/// few objects so clusters form. At least one weight is positive.
pub fn wbf_instance<R: Rng>(rng: &mut R, max_models: usize, max_boxes: usize) -> WbfInstance {
    let models = rng.random_range(1..=max_models);
    let objects: Vec<Coords> = (0..rng.random_range(1..=3))
        .map(|_| random_box(rng, 100.0, 10.0))
        .collect();
    let total = rng.random_range(0..=max_boxes);
    let mut per_model = vec![Vec::new(); models];
    for _ in 0..total {
        let m = rng.random_range(0..models);
        let obj = objects[rng.random_range(0..objects.len())];
        per_model[m].push(InputBox {
            coords: jitter(rng, &obj, 4.0),
            category: rng.random_range(0..2),
            confidence: confidence(rng),
        });
    }
    let mut weights: Vec<f64> = (0..models)
        .map(|_| {
            if rng.random_bool(0.15) {
                0.0
            } else {
                rng.random_range(0.05..=2.0)
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        weights[0] = 1.0;
    }
    WbfInstance { per_model, weights }
}

pub struct MicroDataset {
    pub images: Vec<u64>,
    pub gts: Vec<GtRecord>,
    pub dets: Vec<DetRecord>,
}

/// Up to 3 images and 2 categories with at most `max_boxes` boxes (ground truth
/// plus detections). Detections are mostly jittered ground truth, the rest random.
pub fn micro_dataset<R: Rng>(rng: &mut R, max_boxes: usize) -> MicroDataset {
    let images: Vec<u64> = (0..rng.random_range(1..=3u64)).map(|i| i * 7 + 1).collect();
    let total = rng.random_range(1..=max_boxes);
    let n_gt = rng.random_range(1..=total.div_ceil(2));
    let gts: Vec<GtRecord> = (0..n_gt)
        .map(|_| GtRecord {
            image: images[rng.random_range(0..images.len())],
            category: rng.random_range(0..2),
            coords: random_box(rng, 100.0, 5.0),
        })
        .collect();
    let dets = (0..total - n_gt)
        .map(|_| {
            if rng.random_bool(0.7) {
                let g = gts[rng.random_range(0..gts.len())];
                let category = if rng.random_bool(0.9) {
                    g.category
                } else {
                    1 - g.category
                };
                DetRecord {
                    image: g.image,
                    category,
                    coords: jitter(rng, &g.coords, 3.0),
                    score: confidence(rng),
                }
            } else {
                DetRecord {
                    image: images[rng.random_range(0..images.len())],
                    category: rng.random_range(0..2),
                    coords: random_box(rng, 100.0, 5.0),
                    score: confidence(rng),
                }
            }
        })
        .collect();
    MicroDataset { images, gts, dets }
}
