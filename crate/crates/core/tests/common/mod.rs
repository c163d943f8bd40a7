#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use boxfuse_core::dataset::Split;
use boxfuse_core::{
    BoundingBox, CategoryId, Dataset, Detection, GroundTruthBox, ImageId, ModelRun,
};
use boxfuse_oracle::gen::{jitter, random_box};
use boxfuse_oracle::{DetRecord, GtRecord, InputBox};
use rand::Rng;

pub fn det_from(b: &InputBox, image: u64) -> Detection {
    Detection::new(
        BoundingBox::from_coords(b.coords),
        CategoryId(b.category),
        b.confidence,
        ImageId(image),
    )
}

pub fn dataset_from(images: &[u64], gts: &[GtRecord]) -> Dataset {
    let gt: Vec<GroundTruthBox> = gts
        .iter()
        .map(|g| GroundTruthBox {
            bbox: BoundingBox::from_coords(g.coords),
            category: CategoryId(g.category),
            image: ImageId(g.image),
        })
        .collect();
    Dataset::new(
        images.iter().map(|&i| ImageId(i)),
        gt,
        [],
        Split::Validation,
    )
}

pub fn dets_by_image(dets: &[DetRecord]) -> BTreeMap<ImageId, Vec<Detection>> {
    let mut out: BTreeMap<ImageId, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        out.entry(ImageId(d.image))
            .or_default()
            .push(Detection::new(
                BoundingBox::from_coords(d.coords),
                CategoryId(d.category),
                d.score,
                ImageId(d.image),
            ));
    }
    out
}

/// Small planted-optimum benchmark: model 0 reproduces the ground truth with
/// confidence 0.95, models 1 and 2 emit jittered copies and random boxes.
pub fn planted<R: Rng>(rng: &mut R, num_images: u64) -> (Dataset, Vec<ModelRun>) {
    let mut gts = Vec::new();
    let mut runs: Vec<Vec<Detection>> = vec![Vec::new(); 3];
    for img in 0..num_images {
        for _ in 0..rng.random_range(1..=3) {
            let c = random_box(rng, 200.0, 20.0);
            let cat = rng.random_range(0..2u64);
            gts.push(GroundTruthBox {
                bbox: BoundingBox::from_coords(c),
                category: CategoryId(cat),
                image: ImageId(img),
            });
            runs[0].push(Detection::new(
                BoundingBox::from_coords(c),
                CategoryId(cat),
                0.95,
                ImageId(img),
            ));
            for run in runs.iter_mut().skip(1) {
                if rng.random_bool(0.6) {
                    run.push(Detection::new(
                        BoundingBox::from_coords(jitter(rng, &c, 12.0)),
                        CategoryId(cat),
                        rng.random_range(0.3..1.0),
                        ImageId(img),
                    ));
                }
                if rng.random_bool(0.5) {
                    run.push(Detection::new(
                        BoundingBox::from_coords(random_box(rng, 200.0, 20.0)),
                        CategoryId(rng.random_range(0..2)),
                        rng.random_range(0.3..1.0),
                        ImageId(img),
                    ));
                }
            }
        }
    }
    let images: BTreeSet<ImageId> = (0..num_images).map(ImageId).collect();
    let ds = Dataset::new(images, gts, [], Split::Validation);
    let runs = runs
        .into_iter()
        .enumerate()
        .map(|(m, dets)| ModelRun::from_detections(format!("model{m}"), dets))
        .collect();
    (ds, runs)
}
