//! Evaluation suite: COCO AP for boxes/masks/keypoints, manifold IoU
//! (clip/full), mean pixel distance, the Random baseline and the
//! perturbation test predictor.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CocoDataset, PredictionRecord, PredictionSet};
use crate::rle::decode_rle;
use crate::shapes::ManifoldKind;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("keypoint arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("manifold rasterization needs {needed} keypoints for {kind:?}, got {got}")]
    TooFewKeypoints { kind: ManifoldKind, needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Matching thresholds for AP, default 0.50:0.05:0.95.
    pub iou_thresholds: Vec<f64>,
    /// Uniform OKS constant κ.
    pub oks_kappa: f64,
    /// Manifold rasterization stroke width in pixels.
    pub stroke_px: u32,
    /// Evaluate all objects as a single category.
    pub merge_classes: bool,
    pub canvas: (u32, u32),
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            oks_kappa: 0.1,
            stroke_px: 3,
            merge_classes: false,
            canvas: (512, 512),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub name: String,
    pub ap_bb: f64,
    pub ap_seg: Option<f64>,
    pub ap_kp: f64,
}

/// The column set of the evaluation tables, percentages for AP/IoU and
/// pixels for mDist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap_bb: f64,
    pub ap_seg: Option<f64>,
    pub ap_kp: f64,
    pub iou_clip: Option<MeanStd>,
    pub iou_full: Option<MeanStd>,
    pub mdist: Option<MeanStd>,
    pub matched_pairs: usize,
    pub gt_objects: usize,
    pub match_rate: f64,
    pub per_category: Vec<CategoryReport>,
    pub config: EvalConfig,
}

impl EvalReport {
    /// Aligned text table: AP^bb AP^seg AP^kp IoU_clip IoU_full mDist.
    pub fn to_table(&self) -> String {
        fn pct(v: Option<f64>) -> String {
            v.map_or("-".into(), |x| format!("{x:.1}"))
        }
        fn ms(v: &Option<MeanStd>) -> String {
            v.as_ref()
                .map_or("-".into(), |m| format!("{:.2} +- {:.2}", m.mean, m.std))
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>7} {:>7} {:>7} {:>16} {:>16} {:>16}\n",
            "", "AP^bb", "AP^seg", "AP^kp", "IoU_clip", "IoU_full", "mDist"
        ));
        out.push_str(&format!(
            "{:<10} {:>7} {:>7} {:>7} {:>16} {:>16} {:>16}\n",
            "all",
            pct(Some(self.ap_bb)),
            pct(self.ap_seg),
            pct(Some(self.ap_kp)),
            ms(&self.iou_clip),
            ms(&self.iou_full),
            ms(&self.mdist),
        ));
        for cat in &self.per_category {
            out.push_str(&format!(
                "{:<10} {:>7} {:>7} {:>7}\n",
                cat.name,
                pct(Some(cat.ap_bb)),
                pct(cat.ap_seg),
                pct(Some(cat.ap_kp)),
            ));
        }
        out
    }
}

/// Intersection over union of two (x, y, w, h) boxes; 0 when the union is
/// empty.
pub fn iou_bbox(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    let inter = ix.max(0.0) * iy.max(0.0);
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Object keypoint similarity with a uniform κ: mean over GT keypoints with
/// v > 0 of exp(−d²/(2·area·κ²)); 0 when nothing is labeled.
pub fn oks(
    pred_kps: &[f64],
    gt_kps: &[f64],
    gt_area: f64,
    kappa: f64,
) -> Result<f64, MetricsError> {
    if pred_kps.len() != gt_kps.len() {
        return Err(MetricsError::ArityMismatch(pred_kps.len(), gt_kps.len()));
    }
    let denom = 2.0 * gt_area * kappa * kappa;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in (0..gt_kps.len()).step_by(3) {
        if gt_kps[i + 2] > 0.0 {
            let dx = pred_kps[i] - gt_kps[i];
            let dy = pred_kps[i + 1] - gt_kps[i + 1];
            sum += (-(dx * dx + dy * dy) / denom).exp();
            count += 1;
        }
    }
    if count == 0 {
        Ok(0.0)
    } else {
        Ok(sum / count as f64)
    }
}

pub struct ApGroundTruth {
    pub image_id: u64,
    pub category_id: u32,
    /// Caller-side index handed back to the similarity function.
    pub index: usize,
}

pub struct ApPrediction {
    pub image_id: u64,
    pub category_id: u32,
    pub score: f64,
    pub index: usize,
}

/// COCO average precision: greedy score-descending matching per threshold,
/// 101-point interpolated precision, averaged over thresholds and over
/// categories with ground truth. Returns percent.
pub fn coco_ap(
    gts: &[ApGroundTruth],
    preds: &[ApPrediction],
    similarity: &dyn Fn(usize, usize) -> f64,
    thresholds: &[f64],
    merge_classes: bool,
) -> f64 {
    let cat = |c: u32| if merge_classes { 0 } else { c };
    let mut categories: Vec<u32> = gts.iter().map(|g| cat(g.category_id)).collect();
    categories.sort_unstable();
    categories.dedup();
    if categories.is_empty() {
        return 0.0;
    }

    let mut total = 0.0;
    for &category in &categories {
        let cat_gts: Vec<&ApGroundTruth> =
            gts.iter().filter(|g| cat(g.category_id) == category).collect();
        let mut cat_preds: Vec<&ApPrediction> =
            preds.iter().filter(|p| cat(p.category_id) == category).collect();
        cat_preds.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then(a.index.cmp(&b.index))
        });

        // gt positions grouped by image, similarity evaluated once per pair
        let mut gt_by_image: std::collections::HashMap<u64, Vec<usize>> = Default::default();
        for (pos, g) in cat_gts.iter().enumerate() {
            gt_by_image.entry(g.image_id).or_default().push(pos);
        }
        let empty = Vec::new();
        let sims: Vec<Vec<(usize, f64)>> = cat_preds
            .iter()
            .map(|p| {
                gt_by_image
                    .get(&p.image_id)
                    .unwrap_or(&empty)
                    .iter()
                    .map(|&gpos| (gpos, similarity(p.index, cat_gts[gpos].index)))
                    .collect()
            })
            .collect();

        let n_gt = cat_gts.len();
        let mut ap_sum = 0.0;
        for &t in thresholds {
            let mut gt_matched = vec![false; n_gt];
            let mut tp_flags = Vec::with_capacity(cat_preds.len());
            for candidates in &sims {
                let mut best: Option<(usize, f64)> = None;
                for &(gpos, sim) in candidates {
                    if gt_matched[gpos] || sim < t {
                        continue;
                    }
                    if best.map_or(true, |(_, s)| sim > s) {
                        best = Some((gpos, sim));
                    }
                }
                match best {
                    Some((gpos, _)) => {
                        gt_matched[gpos] = true;
                        tp_flags.push(true);
                    }
                    None => tp_flags.push(false),
                }
            }
            ap_sum += interpolated_ap(&tp_flags, n_gt);
        }
        total += ap_sum / thresholds.len() as f64;
    }
    total / categories.len() as f64 * 100.0
}

// 101-point interpolated AP from score-ordered TP/FP flags.
fn interpolated_ap(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precisions = Vec::with_capacity(tp_flags.len());
    let mut recalls = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (i, &flag) in tp_flags.iter().enumerate() {
        if flag {
            tp += 1;
        }
        precisions.push(tp as f64 / (i + 1) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }
    // precision envelope: max precision at recall >= r
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut sum = 0.0;
    let mut j = 0usize;
    for step in 0..=100 {
        let r = step as f64 / 100.0;
        while j < recalls.len() && recalls[j] + 1e-12 < r {
            j += 1;
        }
        if j < precisions.len() {
            sum += precisions[j];
        }
    }
    sum / 101.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouMode {
    Clip,
    Full,
}

/// Rasterizes a manifold onto the canvas: a stroked open polyline for
/// lines, an even-odd filled polygon plus its stroked closed boundary for
/// surfaces. Returns sorted pixel indices (y·width + x).
pub fn rasterize_manifold(
    points: &[(f64, f64)],
    kind: ManifoldKind,
    stroke_px: u32,
    canvas: (u32, u32),
) -> Result<Vec<u64>, MetricsError> {
    let needed = match kind {
        ManifoldKind::Line => 2,
        ManifoldKind::Surface => 3,
    };
    if points.len() < needed {
        return Err(MetricsError::TooFewKeypoints {
            kind,
            needed,
            got: points.len(),
        });
    }
    let half = stroke_px as f64 / 2.0;
    let (w, h) = (canvas.0 as i64, canvas.1 as i64);
    let pad = half + 1.0;
    let min_x = (points.iter().map(|p| p.0).fold(f64::MAX, f64::min) - pad).floor() as i64;
    let max_x = (points.iter().map(|p| p.0).fold(f64::MIN, f64::max) + pad).ceil() as i64;
    let min_y = (points.iter().map(|p| p.1).fold(f64::MAX, f64::min) - pad).floor() as i64;
    let max_y = (points.iter().map(|p| p.1).fold(f64::MIN, f64::max) + pad).ceil() as i64;
    let (min_x, max_x) = (min_x.max(0), max_x.min(w - 1));
    let (min_y, max_y) = (min_y.max(0), max_y.min(h - 1));

    let segments: Vec<((f64, f64), (f64, f64))> = match kind {
        ManifoldKind::Line => points.windows(2).map(|p| (p[0], p[1])).collect(),
        ManifoldKind::Surface => (0..points.len())
            .map(|i| (points[i], points[(i + 1) % points.len()]))
            .collect(),
    };

    let mut out = Vec::new();
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let stroked = segments
                .iter()
                .any(|&(a, b)| point_segment_distance(px, py, a, b) <= half);
            let inside = kind == ManifoldKind::Surface
                && even_odd_inside(px, py, points);
            if stroked || inside {
                out.push(y as u64 * canvas.0 as u64 + x as u64);
            }
        }
    }
    Ok(out)
}

fn point_segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 <= 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

fn even_odd_inside(px: f64, py: f64, polygon: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = polygon.len();
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        if (a.1 > py) != (b.1 > py) {
            let x_cross = a.0 + (py - a.1) / (b.1 - a.1) * (b.0 - a.0);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn pixel_set_iou(a: &[u64], b: &[u64]) -> f64 {
    // both inputs sorted
    let (mut i, mut j) = (0usize, 0usize);
    let mut inter = 0u64;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() as u64 + b.len() as u64 - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn labeled_points(kps: &[f64]) -> Vec<(f64, f64)> {
    kps.chunks_exact(3)
        .filter(|c| c[2] > 0.0)
        .map(|c| (c[0], c[1]))
        .collect()
}

fn first_points(kps: &[f64], k: usize) -> Vec<(f64, f64)> {
    kps.chunks_exact(3).take(k).map(|c| (c[0], c[1])).collect()
}

// A surface degenerates to a line when fewer than 3 points survive.
fn effective_kind(kind: ManifoldKind, n: usize) -> ManifoldKind {
    if kind == ManifoldKind::Surface && n < 3 {
        ManifoldKind::Line
    } else {
        kind
    }
}

/// Manifold IoU of a matched GT/prediction pair. The GT pixel set uses GT
/// keypoints with v > 0; the prediction uses its first k keypoints (clip,
/// k = GT labeled count) or all K (full). The prediction inherits the GT
/// object's manifold kind.
pub fn manifold_iou(
    gt_keypoints: &[f64],
    kind: ManifoldKind,
    pred_keypoints: &[f64],
    mode: IouMode,
    config: &EvalConfig,
) -> f64 {
    let gt_pts = labeled_points(gt_keypoints);
    if gt_pts.len() < 2 {
        return 0.0;
    }
    let pred_pts = match mode {
        IouMode::Clip => first_points(pred_keypoints, gt_pts.len()),
        IouMode::Full => first_points(pred_keypoints, pred_keypoints.len() / 3),
    };
    if pred_pts.len() < 2 {
        return 0.0;
    }
    let gt_set = rasterize_manifold(
        &gt_pts,
        effective_kind(kind, gt_pts.len()),
        config.stroke_px,
        config.canvas,
    )
    .expect("arity checked above");
    let pred_set = rasterize_manifold(
        &pred_pts,
        effective_kind(kind, pred_pts.len()),
        config.stroke_px,
        config.canvas,
    )
    .expect("arity checked above");
    pixel_set_iou(&gt_set, &pred_set)
}

/// Mean pixel distance between a prediction and a GT keypoint set,
/// index-aligned over GT keypoints with v > 0. Infinite when nothing is
/// labeled or arities differ.
pub fn keypoint_set_distance(pred_kps: &[f64], gt_kps: &[f64]) -> f64 {
    if pred_kps.len() != gt_kps.len() {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in (0..gt_kps.len()).step_by(3) {
        if gt_kps[i + 2] > 0.0 {
            let dx = pred_kps[i] - gt_kps[i];
            let dy = pred_kps[i + 1] - gt_kps[i + 1];
            sum += (dx * dx + dy * dy).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

/// Greedy per-image instance matching: repeatedly pair the globally
/// closest unmatched (prediction, GT) pair by keypoint-set distance.
/// Returns (pred_index, gt_index, distance) triples.
pub fn match_instances(
    gt_keypoint_sets: &[&[f64]],
    pred_keypoint_sets: &[&[f64]],
) -> Vec<(usize, usize, f64)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (p, pred) in pred_keypoint_sets.iter().enumerate() {
        for (g, gt) in gt_keypoint_sets.iter().enumerate() {
            let d = keypoint_set_distance(pred, gt);
            if d.is_finite() {
                candidates.push((d, p, g));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut pred_used = vec![false; pred_keypoint_sets.len()];
    let mut gt_used = vec![false; gt_keypoint_sets.len()];
    let mut pairs = Vec::new();
    for (d, p, g) in candidates {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            pairs.push((p, g, d));
        }
    }
    pairs
}

/// Mean and population std over per-pair distances; `None` when no pairs.
pub fn mean_pixel_distance(pair_distances: &[f64]) -> Option<MeanStd> {
    mean_std(pair_distances)
}

fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(MeanStd { mean, std: var.sqrt() })
}

/// The Random baseline: per source box, K keypoints sampled uniformly
/// inside the box, score 1.0.
pub fn random_baseline<R: Rng>(
    gt: &CocoDataset,
    rng: &mut R,
    boxes: Option<&PredictionSet>,
) -> PredictionSet {
    let category_k: std::collections::HashMap<u32, usize> = gt
        .categories
        .iter()
        .map(|c| (c.id, c.keypoints.len()))
        .collect();
    let sources: Vec<(u64, u32, [f64; 4])> = match boxes {
        Some(preds) => preds
            .records
            .iter()
            .map(|r| (r.image_id, r.category_id, r.bbox))
            .collect(),
        None => gt
            .annotations
            .iter()
            .map(|a| (a.image_id, a.category_id, a.bbox))
            .collect(),
    };
    let records = sources
        .into_iter()
        .map(|(image_id, category_id, bbox)| {
            let k = category_k.get(&category_id).copied().unwrap_or(0);
            let mut keypoints = Vec::with_capacity(3 * k);
            for _ in 0..k {
                keypoints.push(bbox[0] + rng.gen::<f64>() * bbox[2]);
                keypoints.push(bbox[1] + rng.gen::<f64>() * bbox[3]);
                keypoints.push(2.0);
            }
            PredictionRecord {
                image_id,
                category_id,
                score: 1.0,
                bbox,
                segmentation: None,
                keypoints,
            }
        })
        .collect();
    PredictionSet { records }
}

/// Test predictor with controllable quality: copies the ground truth and
/// adds uniform-disc noise of the given radius to labeled keypoints.
pub fn perturbation_predictor<R: Rng>(
    gt: &CocoDataset,
    noise_px: f64,
    rng: &mut R,
) -> PredictionSet {
    let dims: std::collections::HashMap<u64, (u32, u32)> = gt
        .images
        .iter()
        .map(|i| (i.id, (i.width, i.height)))
        .collect();
    let records = gt
        .annotations
        .iter()
        .map(|ann| {
            let (w, h) = dims[&ann.image_id];
            let mut keypoints = ann.keypoints.clone();
            for i in (0..keypoints.len()).step_by(3) {
                if keypoints[i + 2] > 0.0 && noise_px > 0.0 {
                    let angle = rng.gen::<f64>() * std::f64::consts::TAU;
                    let radius = noise_px * rng.gen::<f64>().sqrt();
                    keypoints[i] =
                        (keypoints[i] + radius * angle.cos()).clamp(0.0, w as f64);
                    keypoints[i + 1] =
                        (keypoints[i + 1] + radius * angle.sin()).clamp(0.0, h as f64);
                }
            }
            PredictionRecord {
                image_id: ann.image_id,
                category_id: ann.category_id,
                score: 1.0,
                bbox: ann.bbox,
                segmentation: Some(ann.segmentation.clone()),
                keypoints,
            }
        })
        .collect();
    PredictionSet { records }
}

fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Full evaluation: AP for boxes, masks and keypoints, then instance
/// matching, manifold IoUs and mean pixel distance.
pub fn evaluate(
    gt: &CocoDataset,
    preds: &PredictionSet,
    config: &EvalConfig,
) -> EvalReport {
    let ap_gts: Vec<ApGroundTruth> = gt
        .annotations
        .iter()
        .enumerate()
        .map(|(i, a)| ApGroundTruth { image_id: a.image_id, category_id: a.category_id, index: i })
        .collect();
    let ap_preds: Vec<ApPrediction> = preds
        .records
        .iter()
        .enumerate()
        .map(|(i, p)| ApPrediction {
            image_id: p.image_id,
            category_id: p.category_id,
            score: p.score,
            index: i,
        })
        .collect();

    let bbox_sim = |p: usize, g: usize| {
        iou_bbox(preds.records[p].bbox, gt.annotations[g].bbox)
    };
    let ap_bb = coco_ap(
        &ap_gts,
        &ap_preds,
        &bbox_sim,
        &config.iou_thresholds,
        config.merge_classes,
    );

    let kappa = config.oks_kappa;
    let oks_sim = |p: usize, g: usize| {
        let ann = &gt.annotations[g];
        oks(&preds.records[p].keypoints, &ann.keypoints, ann.area as f64, kappa)
            .unwrap_or(0.0)
    };
    let ap_kp = coco_ap(
        &ap_gts,
        &ap_preds,
        &oks_sim,
        &config.iou_thresholds,
        config.merge_classes,
    );

    let any_pred_seg = preds.records.iter().any(|r| r.segmentation.is_some());
    let seg_eval = any_pred_seg.then(|| {
        let gt_masks: Vec<Vec<bool>> = gt
            .annotations
            .iter()
            .map(|a| decode_rle(&a.segmentation).expect("validated ground truth"))
            .collect();
        let pred_masks: Vec<Option<Vec<bool>>> = preds
            .records
            .iter()
            .map(|r| r.segmentation.as_ref().map(|s| decode_rle(s).expect("validated predictions")))
            .collect();
        (gt_masks, pred_masks)
    });
    let ap_seg = seg_eval.as_ref().map(|(gt_masks, pred_masks)| {
        let seg_sim = |p: usize, g: usize| match &pred_masks[p] {
            Some(mask) if mask.len() == gt_masks[g].len() => mask_iou(mask, &gt_masks[g]),
            _ => 0.0,
        };
        coco_ap(
            &ap_gts,
            &ap_preds,
            &seg_sim,
            &config.iou_thresholds,
            config.merge_classes,
        )
    });

    // instance matching and the manifold metrics, per image in id order
    let mut image_ids: Vec<u64> = gt.images.iter().map(|i| i.id).collect();
    image_ids.sort_unstable();
    let mut gt_by_image: std::collections::HashMap<u64, Vec<usize>> = Default::default();
    for (i, a) in gt.annotations.iter().enumerate() {
        gt_by_image.entry(a.image_id).or_default().push(i);
    }
    let mut pred_by_image: std::collections::HashMap<u64, Vec<usize>> = Default::default();
    for (i, p) in preds.records.iter().enumerate() {
        pred_by_image.entry(p.image_id).or_default().push(i);
    }
    let category_kind: std::collections::HashMap<u32, ManifoldKind> = gt
        .categories
        .iter()
        .map(|c| (c.id, c.manifold_kind))
        .collect();

    use rayon::prelude::*;
    let per_image: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, usize)> = image_ids
        .par_iter()
        .map(|image_id| {
            let gt_idx = gt_by_image.get(image_id).cloned().unwrap_or_default();
            let pred_idx = pred_by_image.get(image_id).cloned().unwrap_or_default();
            let gt_sets: Vec<&[f64]> = gt_idx
                .iter()
                .map(|&i| gt.annotations[i].keypoints.as_slice())
                .collect();
            let pred_sets: Vec<&[f64]> = pred_idx
                .iter()
                .map(|&i| preds.records[i].keypoints.as_slice())
                .collect();
            let pairs = match_instances(&gt_sets, &pred_sets);
            let mut dists = Vec::with_capacity(pairs.len());
            let mut clips = Vec::with_capacity(pairs.len());
            let mut fulls = Vec::with_capacity(pairs.len());
            for (p, g, d) in pairs {
                let ann = &gt.annotations[gt_idx[g]];
                let kind = category_kind
                    .get(&ann.category_id)
                    .copied()
                    .unwrap_or(ManifoldKind::Line);
                let pred_kps = &preds.records[pred_idx[p]].keypoints;
                dists.push(d);
                clips.push(manifold_iou(&ann.keypoints, kind, pred_kps, IouMode::Clip, config));
                fulls.push(manifold_iou(&ann.keypoints, kind, pred_kps, IouMode::Full, config));
            }
            (dists, clips, fulls, gt_idx.len())
        })
        .collect();

    let mut dists = Vec::new();
    let mut clips = Vec::new();
    let mut fulls = Vec::new();
    let mut gt_objects = 0usize;
    for (d, c, f, n) in per_image {
        dists.extend(d);
        clips.extend(c);
        fulls.extend(f);
        gt_objects += n;
    }
    let matched_pairs = dists.len();

    // per-category AP breakdown (always by true category)
    let per_category = gt
        .categories
        .iter()
        .map(|cat| {
            let sub_gts: Vec<ApGroundTruth> = ap_gts
                .iter()
                .filter(|g| g.category_id == cat.id)
                .map(|g| ApGroundTruth { image_id: g.image_id, category_id: g.category_id, index: g.index })
                .collect();
            let sub_preds: Vec<ApPrediction> = ap_preds
                .iter()
                .filter(|p| p.category_id == cat.id)
                .map(|p| ApPrediction {
                    image_id: p.image_id,
                    category_id: p.category_id,
                    score: p.score,
                    index: p.index,
                })
                .collect();
            CategoryReport {
                name: cat.name.clone(),
                ap_bb: coco_ap(&sub_gts, &sub_preds, &bbox_sim, &config.iou_thresholds, false),
                ap_seg: seg_eval.as_ref().map(|(gt_masks, pred_masks)| {
                    let seg_sim = |p: usize, g: usize| match &pred_masks[p] {
                        Some(mask) if mask.len() == gt_masks[g].len() => {
                            mask_iou(mask, &gt_masks[g])
                        }
                        _ => 0.0,
                    };
                    coco_ap(&sub_gts, &sub_preds, &seg_sim, &config.iou_thresholds, false)
                }),
                ap_kp: coco_ap(&sub_gts, &sub_preds, &oks_sim, &config.iou_thresholds, false),
            }
        })
        .collect();

    let scale = |m: MeanStd| MeanStd { mean: m.mean * 100.0, std: m.std * 100.0 };
    EvalReport {
        ap_bb,
        ap_seg,
        ap_kp,
        iou_clip: mean_std(&clips).map(scale),
        iou_full: mean_std(&fulls).map(scale),
        mdist: mean_pixel_distance(&dists),
        matched_pairs,
        gt_objects,
        match_rate: if gt_objects == 0 {
            0.0
        } else {
            matched_pairs as f64 / gt_objects as f64
        },
        per_category,
        config: config.clone(),
    }
}
