mod common;

use std::collections::BTreeMap;

use boxfuse_core::metrics::{average_precision, coco_iou_thresholds};
use boxfuse_core::{
    evaluate, match_detections, ApScheme, CategoryId, Detection, EvalConfig, ImageId, PrCurve,
};
use boxfuse_oracle::gen::{micro_dataset, rng};
use common::{dataset_from, dets_by_image};
use proptest::prelude::*;

#[test]
fn matches_brute_force_on_micro_datasets() {
    let mut r = rng(3);
    for case in 0..500 {
        let m = micro_dataset(&mut r, 20);
        let ds = dataset_from(&m.images, &m.gts);
        let report = evaluate(&dets_by_image(&m.dets), &ds, &EvalConfig::default()).unwrap();
        let (m50, m5095) = boxfuse_oracle::map50_and_map50_95(&m.images, &m.gts, &m.dets);
        assert!(
            (report.map50 - m50).abs() < 1e-9,
            "case {case}: {} vs {m50}",
            report.map50
        );
        assert!((report.map50_95 - m5095).abs() < 1e-9, "case {case}");
    }
}

#[test]
fn hand_derived_ap() {
    let curve = PrCurve::from_ranked([true, false], 2);
    assert_eq!(average_precision(&curve, ApScheme::Point101), 51.0 / 101.0);
}

#[test]
fn perfect_and_empty() {
    let mut r = rng(8);
    let m = micro_dataset(&mut r, 10);
    let ds = dataset_from(&m.images, &m.gts);
    let perfect: Vec<_> = m
        .gts
        .iter()
        .map(|g| boxfuse_oracle::DetRecord {
            image: g.image,
            category: g.category,
            coords: g.coords,
            score: 1.0,
        })
        .collect();
    let rep = evaluate(&dets_by_image(&perfect), &ds, &EvalConfig::default()).unwrap();
    assert_eq!((rep.map50, rep.map50_95), (1.0, 1.0));
    let none: BTreeMap<ImageId, Vec<Detection>> = BTreeMap::new();
    let rep = evaluate(&none, &ds, &EvalConfig::default()).unwrap();
    assert_eq!((rep.map50, rep.map50_95), (0.0, 0.0));
}

fn ap50(
    dets: &[boxfuse_oracle::DetRecord],
    m: &boxfuse_oracle::gen::MicroDataset,
) -> BTreeMap<CategoryId, f64> {
    let ds = dataset_from(&m.images, &m.gts);
    let rep = evaluate(
        &dets_by_image(dets),
        &ds,
        &EvalConfig::single_threshold(0.5),
    )
    .unwrap();
    rep.per_category_ap
        .into_iter()
        .map(|(c, v)| (c, v[0]))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn turning_a_false_positive_into_a_hit_never_lowers_ap(seed in any::<u64>()) {
        let m = micro_dataset(&mut rng(seed), 20);
        let ds = dataset_from(&m.images, &m.gts);
        // ground truth no detection can reach, and detections that match nothing
        let reachable = |g: &boxfuse_oracle::GtRecord| m.dets.iter().any(|d| {
            d.image == g.image && d.category == g.category && boxfuse_oracle::iou(&d.coords, &g.coords) >= 0.5
        });
        let free: Vec<_> = m.gts.iter().filter(|g| !reachable(g)).collect();
        let by_image = dets_by_image(&m.dets);
        let mut fp = None;
        for (img, dets) in &by_image {
            let Some(cat) = dets.iter().map(|d| d.category).next() else { continue };
            let same: Vec<&Detection> = dets.iter().filter(|d| d.category == cat).collect();
            let out = match_detections(&same, ds.ground_truth_for(*img).iter().filter(|g| g.category == cat).cloned().collect::<Vec<_>>().as_slice(), 0.5);
            if let Some(k) = out.is_true_positive.iter().position(|t| !t) {
                let d = same[k];
                fp = m.dets.iter().position(|r| r.image == img.0 && r.category == d.category.0 && r.coords == d.bbox.coords() && r.score == d.confidence);
                break;
            }
        }
        prop_assume!(fp.is_some() && !free.is_empty());
        let fp = fp.unwrap();
        let g = free[0];
        let mut better = m.dets.clone();
        better[fp] = boxfuse_oracle::DetRecord { image: g.image, category: g.category, coords: g.coords, score: m.dets[fp].score };
        let before = ap50(&m.dets, &m);
        let after = ap50(&better, &m);
        for (c, a) in &after {
            prop_assert!(*a + 1e-15 >= before[c], "{c}: {} -> {a}", before[c]);
        }
    }

    #[test]
    fn increasing_confidence_transform_keeps_ap(seed in any::<u64>()) {
        let m = micro_dataset(&mut rng(seed), 20);
        let ds = dataset_from(&m.images, &m.gts);
        let squashed: Vec<_> = m.dets.iter().map(|d| boxfuse_oracle::DetRecord { score: d.score.sqrt() * 0.5, ..*d }).collect();
        let a = evaluate(&dets_by_image(&m.dets), &ds, &EvalConfig::default()).unwrap();
        let b = evaluate(&dets_by_image(&squashed), &ds, &EvalConfig::default()).unwrap();
        prop_assert_eq!(a.per_category_ap, b.per_category_ap);
    }

    #[test]
    fn ap_does_not_grow_with_threshold(seed in any::<u64>()) {
        let m = micro_dataset(&mut rng(seed), 20);
        let ds = dataset_from(&m.images, &m.gts);
        let rep = evaluate(&dets_by_image(&m.dets), &ds, &EvalConfig::default()).unwrap();
        prop_assert_eq!(rep.iou_thresholds, coco_iou_thresholds::<f64>());
        for aps in rep.per_category_ap.values() {
            for w in aps.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15, "{aps:?}");
            }
        }
    }

    #[test]
    fn single_image_pooling_equals_direct_matching(seed in any::<u64>()) {
        let mut m = micro_dataset(&mut rng(seed), 20);
        let only = m.images[0];
        m.images.truncate(1);
        m.gts.iter_mut().for_each(|g| g.image = only);
        m.dets.iter_mut().for_each(|d| d.image = only);
        let ds = dataset_from(&m.images, &m.gts);
        let by_image = dets_by_image(&m.dets);
        let rep = evaluate(&by_image, &ds, &EvalConfig::single_threshold(0.5)).unwrap();
        let empty = Vec::new();
        let dets = by_image.get(&ImageId(only)).unwrap_or(&empty);
        for (cat, aps) in &rep.per_category_ap {
            let mut cd: Vec<&Detection> = dets.iter().filter(|d| d.category == *cat).collect();
            let gts: Vec<_> = ds.ground_truth_for(ImageId(only)).iter().filter(|g| g.category == *cat).cloned().collect();
            // stable sort: input order breaks ties, as in matching
            cd.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
            let out = match_detections(&cd, &gts, 0.5);
            let curve = PrCurve::from_ranked(out.is_true_positive.iter().copied(), gts.len());
            prop_assert_eq!(aps[0], average_precision(&curve, ApScheme::Point101));
        }
    }
}
