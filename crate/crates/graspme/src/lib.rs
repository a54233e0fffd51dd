//! Synthetic tabletop dataset generator and evaluation toolkit for
//! grasp-manifold keypoint prediction. Scenes are randomized, rendered
//! with a software z-buffer rasterizer and exported as COCO-style indexes
//! with boxes, RLE masks and ordered manifold keypoints; the evaluator
//! scores external predictors with COCO AP, manifold IoU and mean pixel
//! distance.

pub mod dataset;
pub mod geometry;
pub mod metrics;
pub mod overlay;
pub mod pipeline;
pub mod render;
pub mod rle;
pub mod scene;
pub mod shapes;
pub mod templates;
