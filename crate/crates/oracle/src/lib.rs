//! Slow, straightforward reference implementations for tests.
//!
//! Nothing here depends on the library under test: boxes are plain
//! `[x_min, y_min, x_max, y_max]` arrays and every routine is written for
//! clarity, not speed.

pub mod gen;

pub type Coords = [f64; 4];

/// Overlap ratio by direct area arithmetic.
pub fn iou(a: &Coords, b: &Coords) -> f64 {
    let area = |c: &Coords| (c[2] - c[0]) * (c[3] - c[1]);
    let iw = a[2].min(b[2]) - a[0].max(b[0]);
    let ih = a[3].min(b[3]) - a[1].max(b[1]);
    let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBox {
    pub coords: Coords,
    pub category: u64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rescale {
    MinTOverN,
    TOverN,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleFused {
    pub coords: Coords,
    pub category: u64,
    pub confidence: f64,
    pub members: usize,
}

#[derive(Clone, Copy)]
struct Entry {
    coords: Coords,
    category: u64,
    w: f64,
}

fn fuse(members: &[Entry]) -> OracleFused {
    let mut coords = [0.0; 4];
    let mut wsum = 0.0;
    for m in members {
        wsum += m.w;
    }
    for (k, c) in coords.iter_mut().enumerate() {
        let mut num = 0.0;
        for m in members {
            num += m.w * m.coords[k];
        }
        *c = num / wsum;
    }
    // category: largest summed score, smallest id on ties
    let mut cats: Vec<(u64, f64)> = Vec::new();
    for m in members {
        match cats.iter_mut().find(|(c, _)| *c == m.category) {
            Some(e) => e.1 += m.w,
            None => cats.push((m.category, m.w)),
        }
    }
    let mut best = cats[0];
    for &(c, s) in &cats[1..] {
        if s > best.1 || (s == best.1 && c < best.0) {
            best = (c, s);
        }
    }
    let mut conf = wsum / members.len() as f64;
    if conf > 1.0 {
        conf = 1.0;
    }
    OracleFused {
        coords,
        category: best.0,
        confidence: conf,
        members: members.len(),
    }
}

/// Greedy weighted boxes fusion, one step at a time.
///
/// Weights are divided by their maximum; a box's score is confidence times
/// that weight; zero-score boxes are skipped.
pub fn wbf(
    per_model: &[Vec<InputBox>],
    weights: &[f64],
    match_threshold: f64,
    category_agnostic: bool,
    rescale: Rescale,
) -> Vec<OracleFused> {
    let n = per_model.len();
    let mut wmax = 0.0;
    for &w in weights {
        if w > wmax {
            wmax = w;
        }
    }
    // gather in (model, input) order
    let mut all: Vec<Entry> = Vec::new();
    for (m, boxes) in per_model.iter().enumerate() {
        for b in boxes {
            let w = b.confidence * (weights[m] / wmax);
            if w > 0.0 {
                all.push(Entry {
                    coords: b.coords,
                    category: b.category,
                    w,
                });
            }
        }
    }
    // insertion sort, descending score; equal scores keep gathering order
    for i in 1..all.len() {
        let mut j = i;
        while j > 0 && all[j - 1].w < all[j].w {
            all.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut lists: Vec<Vec<Entry>> = Vec::new();
    let mut fused: Vec<OracleFused> = Vec::new();
    for b in all {
        let mut pos = None;
        for (j, f) in fused.iter().enumerate() {
            let cat_ok = category_agnostic || f.category == b.category;
            if cat_ok && iou(&f.coords, &b.coords) > match_threshold {
                pos = Some(j);
                break;
            }
        }
        match pos {
            None => {
                lists.push(vec![b]);
                fused.push(fuse(&lists[lists.len() - 1]));
            }
            Some(j) => {
                lists[j].push(b);
                fused[j] = fuse(&lists[j]);
            }
        }
    }
    for f in &mut fused {
        let t = f.members as f64;
        let nn = n as f64;
        f.confidence = match rescale {
            Rescale::MinTOverN => f.confidence * t.min(nn) / nn,
            Rescale::TOverN => (f.confidence * t / nn).min(1.0),
            Rescale::None => f.confidence,
        };
    }
    fused
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtRecord {
    pub image: u64,
    pub category: u64,
    pub coords: Coords,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetRecord {
    pub image: u64,
    pub category: u64,
    pub coords: Coords,
    pub score: f64,
}

/// 101-point interpolated AP: for every recall level, the best precision at
/// any point with at least that recall.
pub fn ap_101(points: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let mut best = 0.0;
        for &(rec, prec) in points {
            if rec >= r && prec > best {
                best = prec;
            }
        }
        total += best;
    }
    total / 101.0
}

/// AP of one category at one IoU threshold. Detections are processed in one
/// global list ordered by score (then image), each claiming the unclaimed
/// same-image ground truth with the highest IoU at or above the threshold.
/// `None` if the category has no ground truth.
pub fn category_ap(
    images: &[u64],
    gts: &[GtRecord],
    dets: &[DetRecord],
    category: u64,
    thr: f64,
) -> Option<f64> {
    let cat_gts: Vec<&GtRecord> = gts.iter().filter(|g| g.category == category).collect();
    if cat_gts.is_empty() {
        return None;
    }
    let mut cat_dets: Vec<&DetRecord> = dets
        .iter()
        .filter(|d| d.category == category && images.contains(&d.image))
        .collect();
    // stable: equal (score, image) keep input order
    cat_dets.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.image.cmp(&b.image))
    });
    let mut claimed = vec![false; cat_gts.len()];
    let mut tp = 0usize;
    let mut points = Vec::new();
    for (n, d) in cat_dets.iter().enumerate() {
        let mut best: Option<usize> = None;
        let mut best_iou = -1.0;
        for (g, gt) in cat_gts.iter().enumerate() {
            if claimed[g] || gt.image != d.image {
                continue;
            }
            let v = iou(&d.coords, &gt.coords);
            if v >= thr && v > best_iou {
                best = Some(g);
                best_iou = v;
            }
        }
        if let Some(g) = best {
            claimed[g] = true;
            tp += 1;
        }
        points.push((tp as f64 / cat_gts.len() as f64, tp as f64 / (n + 1) as f64));
    }
    Some(ap_101(&points))
}

/// mAP over categories with ground truth at one threshold; 0 with no ground truth.
pub fn map_at(images: &[u64], gts: &[GtRecord], dets: &[DetRecord], thr: f64) -> f64 {
    let mut cats: Vec<u64> = gts.iter().map(|g| g.category).collect();
    cats.sort();
    cats.dedup();
    if cats.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for &c in &cats {
        sum += category_ap(images, gts, dets, c, thr).unwrap();
    }
    sum / cats.len() as f64
}

/// `(mAP50, mAP50-95)`.
pub fn map50_and_map50_95(images: &[u64], gts: &[GtRecord], dets: &[DetRecord]) -> (f64, f64) {
    let mut sum = 0.0;
    for k in 0..10 {
        sum += map_at(images, gts, dets, (50 + 5 * k) as f64 / 100.0);
    }
    (map_at(images, gts, dets, 0.5), sum / 10.0)
}

/// Best point of the weight grid `{0, step, ..., 1}^n` (excluding all-zero)
/// under `f`; first in lexicographic order on ties.
pub fn grid_search(n: usize, steps: usize, f: impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut idx = vec![0usize; n];
    let mut best = (vec![0.0; n], f64::NEG_INFINITY);
    loop {
        if idx.iter().any(|&i| i > 0) {
            let w: Vec<f64> = idx.iter().map(|&i| i as f64 / steps as f64).collect();
            let v = f(&w);
            if v > best.1 {
                best = (w, v);
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_iou() {
        assert!((iou(&[0., 0., 2., 2.], &[1., 1., 3., 3.]) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_ap_worked_case() {
        assert_eq!(ap_101(&[(0.5, 1.0), (0.5, 0.5)]), 51.0 / 101.0);
    }

    #[test]
    fn grid_search_visits_everything() {
        let (w, v) = grid_search(2, 10, |w| -(w[0] - 0.3).powi(2) - (w[1] - 0.7).powi(2));
        assert!((w[0] - 0.3).abs() < 1e-12 && (w[1] - 0.7).abs() < 1e-12);
        assert!(v > -1e-20);
    }
}
