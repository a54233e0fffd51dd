//! End-to-end dataset production: parallel scene synthesis, rasterization,
//! annotation and COCO assembly.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{
    annotations_to_coco, emit_scene, split_dataset, CocoCategory, CocoDataset, CocoImage,
    DatasetError,
};
use crate::render::{annotate_scene, rasterize, AnnotatedObject, FrameBuffers, RenderSettings};
use crate::scene::{
    derive_scene_seed, generate_scene, scene_rng, GenerationConfig, Scene, SceneError,
};
use crate::shapes::{ManifoldKind, ObjectTemplate};
use crate::templates::{complex_templates, load_template_dir, simple_templates, TemplateDirError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Templates(#[from] TemplateDirError),
    #[error("scene {index}: {source}")]
    SceneFailed { index: u64, source: SceneError },
}

/// Which object set to spawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Simple,
    Complex,
}

/// Resolves the template list: a mesh directory when configured, otherwise
/// the built-in family.
pub fn resolve_templates(
    family: Family,
    config: &GenerationConfig,
) -> Result<Vec<ObjectTemplate>, PipelineError> {
    match (&config.mesh_dir, family) {
        (Some(dir), _) => Ok(load_template_dir(Path::new(dir))?),
        (None, Family::Simple) => Ok(simple_templates()),
        (None, Family::Complex) => Ok(complex_templates()),
    }
}

/// COCO categories for a template list, ids 1..=N in list order. Keypoint
/// names run kp1..kpK over the budget; the skeleton chains the manifold
/// keypoints and closes the loop for surfaces.
pub fn categories_for(templates: &[ObjectTemplate]) -> Vec<CocoCategory> {
    templates
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let keypoints = (1..=t.k_budget).map(|k| format!("kp{k}")).collect();
            let n = t.manifold.len() as u32;
            let mut skeleton: Vec<[u32; 2]> = (1..n).map(|k| [k, k + 1]).collect();
            if t.manifold.kind() == ManifoldKind::Surface && n >= 3 {
                skeleton.push([n, 1]);
            }
            CocoCategory {
                id: i as u32 + 1,
                name: t.category_name.clone(),
                keypoints,
                skeleton,
                manifold_kind: t.manifold.kind(),
            }
        })
        .collect()
}

/// One fully processed scene.
pub struct SceneBundle {
    pub index: u64,
    pub scene: Scene,
    pub buffers: FrameBuffers,
    pub objects: Vec<AnnotatedObject>,
}

/// Synthesizes, rasterizes and annotates the scene at `index`. Fully
/// determined by (master_seed, index, config, templates).
pub fn build_scene(
    config: &GenerationConfig,
    templates: &[ObjectTemplate],
    master_seed: u64,
    index: u64,
) -> Result<SceneBundle, SceneError> {
    let mut rng = scene_rng(master_seed, index);
    let scene = generate_scene(
        &mut rng,
        config,
        templates,
        derive_scene_seed(master_seed, index),
    )?;
    let settings = RenderSettings { segments: config.tessellation_segments };
    let buffers = rasterize(&scene, &settings);
    let objects = annotate_scene(&scene, &buffers);
    Ok(SceneBundle { index, scene, buffers, objects })
}

/// Generates `scenes` scenes in parallel and assembles a single COCO
/// dataset (image id = scene index + 1). With `out_dir` set, PNGs are
/// written into `<out_dir>/images`. Output is independent of worker count.
pub fn generate_full(
    config: &GenerationConfig,
    templates: &[ObjectTemplate],
    scenes: u64,
    master_seed: u64,
    out_dir: Option<&Path>,
) -> Result<CocoDataset, PipelineError> {
    let categories = categories_for(templates);
    let category_ids: HashMap<String, u32> =
        categories.iter().map(|c| (c.name.clone(), c.id)).collect();

    let images_dir = match out_dir {
        Some(dir) => {
            let images = dir.join("images");
            std::fs::create_dir_all(&images).map_err(DatasetError::from)?;
            Some(images)
        }
        None => None,
    };

    let per_scene: Vec<Result<(CocoImage, Vec<crate::dataset::CocoAnnotation>), PipelineError>> =
        (0..scenes)
            .into_par_iter()
            .map(|index| {
                let bundle = build_scene(config, templates, master_seed, index)
                    .map_err(|source| PipelineError::SceneFailed { index, source })?;
                let record = match &images_dir {
                    Some(dir) => emit_scene(&bundle.buffers, dir, index)?.record,
                    None => CocoImage {
                        id: index + 1,
                        file_name: format!("rgb_{index:06}.png"),
                        width: bundle.buffers.width,
                        height: bundle.buffers.height,
                    },
                };
                // annotation ids are renumbered sequentially afterwards
                let mut scratch_id = 1u64;
                let annotations = annotations_to_coco(
                    &bundle.objects,
                    record.id,
                    bundle.buffers.width,
                    bundle.buffers.height,
                    &category_ids,
                    &mut scratch_id,
                );
                Ok((record, annotations))
            })
            .collect();

    let mut dataset = CocoDataset { categories, ..Default::default() };
    let mut next_id = 1u64;
    for item in per_scene {
        let (record, mut annotations) = item?;
        for ann in &mut annotations {
            ann.id = next_id;
            next_id += 1;
        }
        dataset.images.push(record);
        dataset.annotations.extend(annotations);
    }
    Ok(dataset)
}

/// Partitions a full dataset into train/val/test by scene (80/10/10,
/// seeded shuffle). Needs at least 10 scenes.
pub fn split_coco(
    full: &CocoDataset,
    scenes: u64,
    master_seed: u64,
) -> Result<(CocoDataset, CocoDataset, CocoDataset), DatasetError> {
    let (train, val, test) = split_dataset(scenes, master_seed)?;
    let subset = |scene_ids: &[u64]| {
        let image_ids: std::collections::HashSet<u64> =
            scene_ids.iter().map(|&s| s + 1).collect();
        CocoDataset {
            images: full
                .images
                .iter()
                .filter(|i| image_ids.contains(&i.id))
                .cloned()
                .collect(),
            annotations: full
                .annotations
                .iter()
                .filter(|a| image_ids.contains(&a.image_id))
                .cloned()
                .collect(),
            categories: full.categories.clone(),
        }
    };
    Ok((subset(&train), subset(&val), subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{validate_coco, write_coco};

    fn small_config() -> GenerationConfig {
        GenerationConfig {
            image_width: 64,
            image_height: 64,
            object_count: (1, 3),
            tessellation_segments: 8,
            ..Default::default()
        }
    }

    #[test]
    fn generated_dataset_validates() {
        let config = small_config();
        let templates = simple_templates();
        let full = generate_full(&config, &templates, 12, 7, None).unwrap();
        assert_eq!(full.images.len(), 12);
        assert!(!full.annotations.is_empty());
        validate_coco(&full).unwrap();

        let (train, val, test) = split_coco(&full, 12, 7).unwrap();
        assert_eq!(train.images.len(), 10);
        assert_eq!(val.images.len(), 1);
        assert_eq!(test.images.len(), 1);
        assert_eq!(
            train.annotations.len() + val.annotations.len() + test.annotations.len(),
            full.annotations.len()
        );
        for split in [&train, &val, &test] {
            validate_coco(split).unwrap();
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = small_config();
        let templates = simple_templates();
        let a = generate_full(&config, &templates, 6, 99, None).unwrap();
        let b = generate_full(&config, &templates, 6, 99, None).unwrap();
        assert_eq!(write_coco(&a), write_coco(&b));

        let c = generate_full(&config, &templates, 6, 100, None).unwrap();
        assert_ne!(write_coco(&a), write_coco(&c));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let config = small_config();
        let templates = simple_templates();
        let baseline = generate_full(&config, &templates, 8, 3, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial =
            pool.install(|| generate_full(&config, &templates, 8, 3, None).unwrap());
        assert_eq!(write_coco(&baseline), write_coco(&serial));
    }

    #[test]
    fn categories_cover_templates() {
        let cats = categories_for(&simple_templates());
        assert_eq!(cats.len(), 3);
        assert_eq!(cats[0].id, 1);
        assert_eq!(cats[0].keypoints, vec!["kp1", "kp2"]);
        assert_eq!(cats[0].skeleton, vec![[1, 2]]);

        let complex = categories_for(&complex_templates());
        for cat in &complex {
            assert_eq!(cat.keypoints.len(), 10);
            if cat.manifold_kind == ManifoldKind::Surface {
                let last = *cat.skeleton.last().unwrap();
                assert_eq!(last[1], 1);
            }
        }
    }
}
