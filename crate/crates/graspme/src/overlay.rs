//! Annotation overlays for visual inspection: bbox rectangles, mask
//! tinting, keypoint dots and the manifold drawn through the visible
//! keypoints.

use std::collections::HashMap;

use image::RgbImage;

use crate::dataset::{CocoAnnotation, CocoDataset, PredictionRecord};
use crate::metrics::rasterize_manifold;
use crate::rle::decode_rle;
use crate::shapes::ManifoldKind;

pub const GT_COLOR: [u8; 3] = [40, 200, 80];
pub const PRED_COLOR: [u8; 3] = [230, 70, 40];
pub const MANIFOLD_COLOR: [u8; 3] = [0, 0, 0];

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, image::Rgb(color));
    }
}

fn draw_rect(img: &mut RgbImage, bbox: [f64; 4], color: [u8; 3]) {
    let (x0, y0) = (bbox[0].round() as i64, bbox[1].round() as i64);
    let (x1, y1) = ((bbox[0] + bbox[2]).round() as i64, (bbox[1] + bbox[3]).round() as i64);
    for x in x0..=x1 {
        put(img, x, y0, color);
        put(img, x, y1, color);
    }
    for y in y0..=y1 {
        put(img, x0, y, color);
        put(img, x1, y, color);
    }
}

fn draw_dot(img: &mut RgbImage, x: f64, y: f64, color: [u8; 3]) {
    let (cx, cy) = (x.floor() as i64, y.floor() as i64);
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, cx + dx, cy + dy, color);
        }
    }
}

fn tint_mask(img: &mut RgbImage, mask: &[bool], color: [u8; 3]) {
    let w = img.width() as usize;
    for (i, &on) in mask.iter().enumerate() {
        if on {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            let px = img.get_pixel_mut(x, y);
            for c in 0..3 {
                px.0[c] = ((px.0[c] as u16 + color[c] as u16) / 2) as u8;
            }
        }
    }
}

// Draws the manifold through keypoints with v == 2; nothing when too few
// are visible. A surface with under 3 visible points degrades to a line.
fn draw_manifold(
    img: &mut RgbImage,
    keypoints: &[f64],
    kind: ManifoldKind,
    stroke: u32,
    color: [u8; 3],
) {
    let points: Vec<(f64, f64)> = keypoints
        .chunks_exact(3)
        .filter(|c| c[2] >= 2.0)
        .map(|c| (c[0], c[1]))
        .collect();
    if points.len() < 2 {
        return;
    }
    let kind = if kind == ManifoldKind::Surface && points.len() < 3 {
        ManifoldKind::Line
    } else {
        kind
    };
    let canvas = (img.width(), img.height());
    let pixels = rasterize_manifold(&points, kind, stroke, canvas)
        .expect("arity checked above");
    for idx in pixels {
        let (x, y) = ((idx % canvas.0 as u64) as u32, (idx / canvas.0 as u64) as u32);
        img.put_pixel(x, y, image::Rgb(color));
    }
}

/// Draws ground-truth annotations: tinted masks, boxes, keypoint dots and
/// black manifolds.
pub fn draw_ground_truth(
    img: &mut RgbImage,
    dataset: &CocoDataset,
    annotations: &[&CocoAnnotation],
    stroke: u32,
) {
    let kinds: HashMap<u32, ManifoldKind> = dataset
        .categories
        .iter()
        .map(|c| (c.id, c.manifold_kind))
        .collect();
    for ann in annotations {
        if let Ok(mask) = decode_rle(&ann.segmentation) {
            if mask.len() == (img.width() * img.height()) as usize {
                tint_mask(img, &mask, GT_COLOR);
            }
        }
    }
    for ann in annotations {
        draw_rect(img, ann.bbox, GT_COLOR);
        for c in ann.keypoints.chunks_exact(3) {
            if c[2] > 0.0 {
                draw_dot(img, c[0], c[1], GT_COLOR);
            }
        }
        let kind = kinds.get(&ann.category_id).copied().unwrap_or(ManifoldKind::Line);
        draw_manifold(img, &ann.keypoints, kind, stroke, MANIFOLD_COLOR);
    }
}

/// Draws predictions in the secondary color.
pub fn draw_predictions(
    img: &mut RgbImage,
    dataset: &CocoDataset,
    records: &[&PredictionRecord],
    stroke: u32,
) {
    let kinds: HashMap<u32, ManifoldKind> = dataset
        .categories
        .iter()
        .map(|c| (c.id, c.manifold_kind))
        .collect();
    for rec in records {
        draw_rect(img, rec.bbox, PRED_COLOR);
        for c in rec.keypoints.chunks_exact(3) {
            draw_dot(img, c[0], c[1], PRED_COLOR);
        }
        let kind = kinds.get(&rec.category_id).copied().unwrap_or(ManifoldKind::Line);
        draw_manifold(img, &rec.keypoints, kind, stroke, PRED_COLOR);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CocoCategory, CocoImage};
    use crate::rle::encode_rle;

    fn fixture() -> (RgbImage, CocoDataset) {
        let mask = vec![false; 64 * 64];
        let dataset = CocoDataset {
            images: vec![CocoImage { id: 1, file_name: "rgb_000000.png".into(), width: 64, height: 64 }],
            annotations: vec![CocoAnnotation {
                id: 1,
                image_id: 1,
                category_id: 1,
                bbox: [10.0, 10.0, 20.0, 10.0],
                area: 0,
                iscrowd: 0,
                segmentation: encode_rle(&mask, 64, 64),
                keypoints: vec![12.0, 15.0, 2.0, 28.0, 15.0, 2.0],
                num_keypoints: 2,
            }],
            categories: vec![CocoCategory {
                id: 1,
                name: "cuboid".into(),
                keypoints: vec!["kp1".into(), "kp2".into()],
                skeleton: vec![[1, 2]],
                manifold_kind: ManifoldKind::Line,
            }],
        };
        (RgbImage::from_pixel(64, 64, image::Rgb([128, 128, 128])), dataset)
    }

    #[test]
    fn manifold_pixels_match_rasterizer() {
        let (mut img, dataset) = fixture();
        let anns: Vec<&CocoAnnotation> = dataset.annotations.iter().collect();
        draw_ground_truth(&mut img, &dataset, &anns, 1);
        let expected = rasterize_manifold(
            &[(12.0, 15.0), (28.0, 15.0)],
            ManifoldKind::Line,
            1,
            (64, 64),
        )
        .unwrap();
        for idx in expected {
            let (x, y) = ((idx % 64) as u32, (idx / 64) as u32);
            assert_eq!(img.get_pixel(x, y).0, MANIFOLD_COLOR);
        }
    }

    #[test]
    fn occluded_object_draws_no_manifold() {
        let (mut img, mut dataset) = fixture();
        for c in dataset.annotations[0].keypoints.chunks_exact_mut(3) {
            c[2] = 1.0;
        }
        let anns: Vec<&CocoAnnotation> = dataset.annotations.iter().collect();
        draw_ground_truth(&mut img, &dataset, &anns, 1);
        let black = img.pixels().filter(|p| p.0 == MANIFOLD_COLOR).count();
        assert_eq!(black, 0);
    }
}
