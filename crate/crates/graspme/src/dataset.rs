//! COCO-format persistence: canonical index serialization, image emission,
//! splits and the prediction-file interface.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::{AnnotatedObject, FrameBuffers};
use crate::rle::{decode_rle, encode_rle, RleMask};
use crate::scene::scene_rng;
use crate::shapes::ManifoldKind;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema error at {path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("instance id {0} exceeds the 8-bit segmentation image range")]
    InstanceIdOverflow(u32),
    #[error("split needs at least 10 scenes, got {0}")]
    TooFewScenes(u64),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image encoding error: {0}")]
    Image(#[from] image::ImageError),
}

fn schema<T>(path: impl Into<String>, msg: impl Into<String>) -> Result<T, DatasetError> {
    Err(DatasetError::Schema { path: path.into(), msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// [x_min, y_min, w, h] with w = x_max − x_min over mask pixels.
    pub bbox: [f64; 4],
    /// Mask pixel count (used by OKS normalization).
    pub area: u64,
    pub iscrowd: u8,
    pub segmentation: RleMask,
    /// Flat [x1, y1, v1, x2, y2, v2, ...], length 3K.
    pub keypoints: Vec<f64>,
    pub num_keypoints: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
    pub keypoints: Vec<String>,
    pub skeleton: Vec<[u32; 2]>,
    pub manifold_kind: ManifoldKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: u64,
    pub category_id: u32,
    pub score: f64,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<RleMask>,
    /// Flat length-3K array; the v slot carries predicted confidence.
    pub keypoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub records: Vec<PredictionRecord>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Canonical serialization: sorted keys, pixel quantities at 2 decimals,
/// so identical datasets produce identical bytes.
pub fn write_coco(dataset: &CocoDataset) -> String {
    let mut canonical = dataset.clone();
    for ann in &mut canonical.annotations {
        for v in &mut ann.bbox {
            *v = round2(*v);
        }
        for v in &mut ann.keypoints {
            *v = round2(*v);
        }
    }
    // serde_json's default map is ordered, so converting through Value
    // sorts all object keys.
    let value = serde_json::to_value(&canonical).expect("dataset serializes");
    serde_json::to_string(&value).expect("value serializes")
}

pub fn read_coco(text: &str) -> Result<CocoDataset, DatasetError> {
    let dataset: CocoDataset = serde_json::from_str(text)
        .map_err(|e| DatasetError::Schema { path: "$".into(), msg: e.to_string() })?;
    validate_coco(&dataset)?;
    Ok(dataset)
}

pub fn validate_coco(dataset: &CocoDataset) -> Result<(), DatasetError> {
    let mut image_ids = std::collections::HashSet::new();
    for img in &dataset.images {
        if !image_ids.insert(img.id) {
            return schema(format!("images[id={}]", img.id), "duplicate image id");
        }
    }
    let mut category_ids = std::collections::HashMap::new();
    for cat in &dataset.categories {
        if category_ids.insert(cat.id, cat.keypoints.len()).is_some() {
            return schema(format!("categories[id={}]", cat.id), "duplicate category id");
        }
    }
    let mut ann_ids = std::collections::HashSet::new();
    for ann in &dataset.annotations {
        let path = format!("annotations[id={}]", ann.id);
        if !ann_ids.insert(ann.id) {
            return schema(path, "duplicate annotation id");
        }
        if !image_ids.contains(&ann.image_id) {
            return Err(DatasetError::DanglingReference(format!(
                "{path} references missing image {}",
                ann.image_id
            )));
        }
        let Some(&k) = category_ids.get(&ann.category_id) else {
            return Err(DatasetError::DanglingReference(format!(
                "{path} references missing category {}",
                ann.category_id
            )));
        };
        if ann.keypoints.len() != 3 * k {
            return schema(
                path,
                format!("keypoints length {} != 3K = {}", ann.keypoints.len(), 3 * k),
            );
        }
        let visible = ann.keypoints.iter().skip(2).step_by(3).filter(|&&v| v > 0.0).count();
        if visible as u32 != ann.num_keypoints {
            return schema(
                path,
                format!("num_keypoints {} != {} entries with v > 0", ann.num_keypoints, visible),
            );
        }
        decode_rle(&ann.segmentation)
            .map_err(|e| DatasetError::Schema { path: path.clone(), msg: e.to_string() })?;
    }
    Ok(())
}

/// Builds COCO records for one rendered scene. `category_ids` maps category
/// names to ids; `next_annotation_id` is advanced per annotation.
pub fn annotations_to_coco(
    objects: &[AnnotatedObject],
    image_id: u64,
    width: u32,
    height: u32,
    category_ids: &std::collections::HashMap<String, u32>,
    next_annotation_id: &mut u64,
) -> Vec<CocoAnnotation> {
    objects
        .iter()
        .map(|obj| {
            let mut keypoints = Vec::with_capacity(obj.keypoints.len() * 3);
            let mut num_keypoints = 0u32;
            for &(u, v, flag) in &obj.keypoints {
                keypoints.extend_from_slice(&[u, v, flag as f64]);
                if flag > 0 {
                    num_keypoints += 1;
                }
            }
            let id = *next_annotation_id;
            *next_annotation_id += 1;
            CocoAnnotation {
                id,
                image_id,
                category_id: category_ids[&obj.category_name],
                bbox: [
                    obj.bbox.0 as f64,
                    obj.bbox.1 as f64,
                    obj.bbox.2 as f64,
                    obj.bbox.3 as f64,
                ],
                area: obj.area,
                iscrowd: 0,
                segmentation: encode_rle(&obj.mask, width, height),
                keypoints,
                num_keypoints,
            }
        })
        .collect()
}

/// Image files written for one scene.
pub struct EmittedFiles {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub seg: PathBuf,
    pub record: CocoImage,
}

/// Writes `rgb_%06d.png` (8-bit RGB), `depth_%06d.png` (16-bit millimeters,
/// 65535 sentinel for background) and `seg_%06d.png` (8-bit instance ids).
pub fn emit_scene(
    buffers: &FrameBuffers,
    out_dir: &Path,
    scene_index: u64,
) -> Result<EmittedFiles, DatasetError> {
    if let Some(&id) = buffers.instance_id.iter().find(|&&id| id > 255) {
        return Err(DatasetError::InstanceIdOverflow(id));
    }
    let (w, h) = (buffers.width, buffers.height);
    let rgb_path = out_dir.join(format!("rgb_{scene_index:06}.png"));
    let depth_path = out_dir.join(format!("depth_{scene_index:06}.png"));
    let seg_path = out_dir.join(format!("seg_{scene_index:06}.png"));

    let rgb = image::RgbImage::from_raw(w, h, buffers.rgb.clone())
        .expect("buffer dimensions match");
    rgb.save(&rgb_path)?;

    let depth_px: Vec<u16> = buffers
        .depth
        .iter()
        .map(|&d| {
            if d.is_finite() {
                (d * 1000.0).round().clamp(0.0, 65535.0) as u16
            } else {
                65535
            }
        })
        .collect();
    let depth = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w, h, depth_px)
        .expect("buffer dimensions match");
    depth.save(&depth_path)?;

    let seg_px: Vec<u8> = buffers.instance_id.iter().map(|&id| id as u8).collect();
    let seg = image::GrayImage::from_raw(w, h, seg_px).expect("buffer dimensions match");
    seg.save(&seg_path)?;

    Ok(EmittedFiles {
        rgb: rgb_path,
        depth: depth_path,
        seg: seg_path,
        record: CocoImage {
            id: scene_index + 1,
            file_name: format!("rgb_{scene_index:06}.png"),
            width: w,
            height: h,
        },
    })
}

/// Deterministic 80/10/10 split by scene index; val/test take ⌊n/10⌋ each
/// and the remainder goes to train. Returned id lists are sorted.
pub fn split_dataset(n_scenes: u64, seed: u64) -> Result<(Vec<u64>, Vec<u64>, Vec<u64>), DatasetError> {
    if n_scenes < 10 {
        return Err(DatasetError::TooFewScenes(n_scenes));
    }
    let mut ids: Vec<u64> = (0..n_scenes).collect();
    let mut rng = scene_rng(seed, u64::MAX);
    // Fisher-Yates with an explicit index draw, stable across rand versions.
    for i in (1..ids.len()).rev() {
        let j = (rng.gen::<f64>() * (i + 1) as f64) as usize % (i + 1);
        ids.swap(i, j);
    }
    let n_val = (n_scenes / 10) as usize;
    let n_test = (n_scenes / 10) as usize;
    let n_train = n_scenes as usize - n_val - n_test;
    let mut train = ids[..n_train].to_vec();
    let mut val = ids[n_train..n_train + n_val].to_vec();
    let mut test = ids[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((train, val, test))
}

/// Parses and validates a prediction file against the ground truth.
pub fn read_predictions(text: &str, gt: &CocoDataset) -> Result<PredictionSet, DatasetError> {
    let records: Vec<PredictionRecord> = serde_json::from_str(text)
        .map_err(|e| DatasetError::Schema { path: "$".into(), msg: e.to_string() })?;
    validate_predictions(&records, gt)?;
    Ok(PredictionSet { records })
}

pub fn validate_predictions(
    records: &[PredictionRecord],
    gt: &CocoDataset,
) -> Result<(), DatasetError> {
    let image_ids: std::collections::HashSet<u64> = gt.images.iter().map(|i| i.id).collect();
    let category_k: std::collections::HashMap<u32, usize> = gt
        .categories
        .iter()
        .map(|c| (c.id, c.keypoints.len()))
        .collect();
    for (i, rec) in records.iter().enumerate() {
        let path = format!("predictions[{i}]");
        if !image_ids.contains(&rec.image_id) {
            return Err(DatasetError::DanglingReference(format!(
                "{path} references unknown image {}",
                rec.image_id
            )));
        }
        let Some(&k) = category_k.get(&rec.category_id) else {
            return Err(DatasetError::DanglingReference(format!(
                "{path} references unknown category {}",
                rec.category_id
            )));
        };
        if rec.keypoints.len() != 3 * k {
            return schema(
                path,
                format!("keypoints length {} != 3K = {}", rec.keypoints.len(), 3 * k),
            );
        }
        if !rec.score.is_finite() {
            return schema(path, "non-finite score");
        }
    }
    Ok(())
}

pub fn write_predictions(preds: &PredictionSet) -> String {
    let mut canonical = preds.records.clone();
    for rec in &mut canonical {
        for v in &mut rec.bbox {
            *v = round2(*v);
        }
        for v in &mut rec.keypoints {
            *v = round2(*v);
        }
    }
    let value = serde_json::to_value(&canonical).expect("predictions serialize");
    serde_json::to_string(&value).expect("value serializes")
}

pub fn save_text(path: &Path, text: &str) -> Result<(), DatasetError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> CocoDataset {
        let mask = vec![false, true, true, false];
        CocoDataset {
            images: vec![CocoImage { id: 1, file_name: "rgb_000000.png".into(), width: 2, height: 2 }],
            annotations: vec![CocoAnnotation {
                id: 1,
                image_id: 1,
                category_id: 1,
                bbox: [0.0, 0.0, 1.0, 1.0],
                area: 2,
                iscrowd: 0,
                segmentation: encode_rle(&mask, 2, 2),
                keypoints: vec![0.5, 0.5, 2.0, 1.5, 1.5, 1.0],
                num_keypoints: 2,
            }],
            categories: vec![CocoCategory {
                id: 1,
                name: "cuboid".into(),
                keypoints: vec!["kp1".into(), "kp2".into()],
                skeleton: vec![[1, 2]],
                manifold_kind: ManifoldKind::Line,
            }],
        }
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let text = write_coco(&tiny_dataset());
        let reread = read_coco(&text).unwrap();
        assert_eq!(write_coco(&reread), text);
        assert_eq!(reread.annotations[0].num_keypoints, 2);
    }

    #[test]
    fn dangling_image_reference_fails() {
        let mut ds = tiny_dataset();
        ds.annotations[0].image_id = 999;
        assert!(matches!(
            read_coco(&write_coco(&ds)),
            Err(DatasetError::DanglingReference(_))
        ));
    }

    #[test]
    fn keypoint_arity_validated() {
        let mut ds = tiny_dataset();
        ds.annotations[0].keypoints.pop();
        assert!(read_coco(&write_coco(&ds)).is_err());
    }

    #[test]
    fn split_sizes() {
        let (train, val, test) = split_dataset(40_000, 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (32_000, 4_000, 4_000));
        let (train, val, test) = split_dataset(10, 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (8, 1, 1));
        assert!(split_dataset(9, 1).is_err());
    }

    #[test]
    fn split_is_partition_and_seeded() {
        let (train, val, test) = split_dataset(100, 7).unwrap();
        let mut all: Vec<u64> = train.iter().chain(&val).chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_dataset(100, 7).unwrap(), (train.clone(), val, test));
        assert_ne!(split_dataset(100, 8).unwrap().0, train);
    }

    #[test]
    fn predictions_roundtrip_and_validation() {
        let gt = tiny_dataset();
        let empty = read_predictions("[]", &gt).unwrap();
        assert!(empty.records.is_empty());

        let good = PredictionRecord {
            image_id: 1,
            category_id: 1,
            score: 0.9,
            bbox: [0.0, 0.0, 1.0, 1.0],
            segmentation: None,
            keypoints: vec![0.0; 6],
        };
        let text = write_predictions(&PredictionSet { records: vec![good.clone()] });
        assert_eq!(read_predictions(&text, &gt).unwrap().records.len(), 1);

        let mut short = good.clone();
        short.keypoints.pop();
        let text = write_predictions(&PredictionSet { records: vec![short] });
        assert!(read_predictions(&text, &gt).is_err());

        let mut unknown = good;
        unknown.image_id = 5;
        let text = write_predictions(&PredictionSet { records: vec![unknown] });
        assert!(read_predictions(&text, &gt).is_err());
    }

    #[test]
    fn emit_scene_writes_expected_values() {
        use crate::render::FrameBuffers;
        let dir = tempfile::tempdir().unwrap();
        let mut buffers = FrameBuffers {
            width: 4,
            height: 4,
            rgb: vec![10; 48],
            depth: vec![f64::INFINITY; 16],
            instance_id: vec![0; 16],
        };
        buffers.depth[5] = 1.234;
        buffers.instance_id[5] = 3;
        let emitted = emit_scene(&buffers, dir.path(), 0).unwrap();
        assert_eq!(emitted.record.file_name, "rgb_000000.png");

        let depth = image::open(&emitted.depth).unwrap().into_luma16();
        assert_eq!(depth.get_pixel(1, 1).0[0], 1234);
        assert_eq!(depth.get_pixel(0, 0).0[0], 65535);

        let seg = image::open(&emitted.seg).unwrap().into_luma8();
        let mut histogram = std::collections::HashMap::new();
        for px in seg.pixels() {
            *histogram.entry(px.0[0]).or_insert(0) += 1;
        }
        assert_eq!(histogram[&3], 1);
        assert_eq!(histogram[&0], 15);
    }

    #[test]
    fn emit_scene_rejects_wide_ids() {
        use crate::render::FrameBuffers;
        let dir = tempfile::tempdir().unwrap();
        let buffers = FrameBuffers {
            width: 1,
            height: 1,
            rgb: vec![0; 3],
            depth: vec![1.0],
            instance_id: vec![300],
        };
        assert!(matches!(
            emit_scene(&buffers, dir.path(), 0),
            Err(DatasetError::InstanceIdOverflow(300))
        ));
    }
}
