//! Software z-buffer rasterizer and ground-truth annotation extraction.
//!
//! One sample per pixel at pixel centers (u + 0.5 convention), no
//! anti-aliasing, no back-face culling. Depth ties resolve to the lower
//! instance id so output never depends on triangle submission order of
//! equal-depth surfaces.

use thiserror::Error;

use crate::geometry::{project, transform_point, Camera, Vec3};
use crate::scene::Scene;
use crate::shapes::{pad_keypoints, tessellate, Geometry};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("simple-family keypoint swap needs exactly 2 keypoints, got {0}")]
    SwapArity(usize),
}

const NEAR_PLANE: f64 = 1e-4;
const BACKGROUND_RGB: [u8; 3] = [18, 18, 24];

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB bytes, 3 per pixel.
    pub rgb: Vec<u8>,
    /// Camera-Z in meters; +inf for background.
    pub depth: Vec<f64>,
    /// 0 = background/table.
    pub instance_id: Vec<u32>,
}

impl FrameBuffers {
    fn new(width: u32, height: u32) -> FrameBuffers {
        let n = (width * height) as usize;
        FrameBuffers {
            width,
            height,
            rgb: vec![0; n * 3],
            depth: vec![f64::INFINITY; n],
            instance_id: vec![0; n],
        }
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn id_at(&self, x: u32, y: u32) -> u32 {
        self.instance_id[self.index(x, y)]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RenderSettings {
    /// Angular subdivisions used to tessellate primitive instances.
    pub segments: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { segments: 32 }
    }
}

/// Per-object 2D ground truth extracted from the buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedObject {
    pub instance_id: u32,
    pub category_name: String,
    /// (x_min, y_min, w, h) with w = x_max − x_min over mask pixels.
    pub bbox: (u32, u32, u32, u32),
    /// Row-major visibility mask, width·height entries.
    pub mask: Vec<bool>,
    /// Mask pixel count.
    pub area: u64,
    /// Sub-pixel (u, v, flag) triples, padded to the template budget K.
    pub keypoints: Vec<(f64, f64, u8)>,
}

struct ShadedTriangle {
    cam: [Vec3; 3],
    rgb: [u8; 3],
    id: u32,
}

fn shade(color: [f64; 3], normal: Vec3, world_centroid: Vec3, scene: &Scene) -> [u8; 3] {
    let l = (scene.light.position - world_centroid).normalized();
    let diffuse = scene.light.intensity * normal.dot(l).max(0.0);
    let mut out = [0u8; 3];
    for (i, c) in color.iter().enumerate() {
        let v = (c * (scene.light.ambient + diffuse)).clamp(0.0, 1.0);
        out[i] = (v * 255.0).round() as u8;
    }
    out
}

// Clips a camera-space triangle against z = NEAR_PLANE, returning a fan of
// triangles (0, 1 or 2).
fn clip_near(tri: [Vec3; 3]) -> Vec<[Vec3; 3]> {
    let mut poly: Vec<Vec3> = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let (ain, bin) = (a.z >= NEAR_PLANE, b.z >= NEAR_PLANE);
        if ain {
            poly.push(a);
        }
        if ain != bin {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            poly.push(a + (b - a).scale(t));
        }
    }
    (1..poly.len().saturating_sub(1))
        .map(|k| [poly[0], poly[k], poly[k + 1]])
        .collect()
}

fn raster_triangle(buffers: &mut FrameBuffers, camera: &Camera, tri: &ShadedTriangle) {
    let k = &camera.intrinsics;
    let screen: Vec<(f64, f64, f64)> = tri
        .cam
        .iter()
        .map(|p| (k.cx + k.fx * p.x / p.z, k.cy + k.fy * p.y / p.z, 1.0 / p.z))
        .collect();
    let (w, h) = (buffers.width as i64, buffers.height as i64);
    let min_x = screen.iter().map(|p| p.0).fold(f64::MAX, f64::min).floor() as i64;
    let max_x = screen.iter().map(|p| p.0).fold(f64::MIN, f64::max).ceil() as i64;
    let min_y = screen.iter().map(|p| p.1).fold(f64::MAX, f64::min).floor() as i64;
    let max_y = screen.iter().map(|p| p.1).fold(f64::MIN, f64::max).ceil() as i64;
    let (min_x, max_x) = (min_x.max(0), max_x.min(w - 1));
    let (min_y, max_y) = (min_y.max(0), max_y.min(h - 1));
    if min_x > max_x || min_y > max_y {
        return;
    }

    let edge = |a: &(f64, f64, f64), b: &(f64, f64, f64), px: f64, py: f64| {
        (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0)
    };
    let area = edge(&screen[0], &screen[1], screen[2].0, screen[2].1);
    if area.abs() < 1e-12 {
        return;
    }
    for py in min_y..=max_y {
        for px in min_x..=max_x {
            let (sx, sy) = (px as f64 + 0.5, py as f64 + 0.5);
            let w0 = edge(&screen[1], &screen[2], sx, sy);
            let w1 = edge(&screen[2], &screen[0], sx, sy);
            let w2 = edge(&screen[0], &screen[1], sx, sy);
            let inside = if area > 0.0 {
                w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0
            } else {
                w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0
            };
            if !inside {
                continue;
            }
            let inv_z =
                (w0 * screen[0].2 + w1 * screen[1].2 + w2 * screen[2].2) / area;
            if inv_z <= 0.0 {
                continue;
            }
            let depth = 1.0 / inv_z;
            let idx = (py * w + px) as usize;
            let current = buffers.depth[idx];
            let wins = depth < current
                || (depth == current && tri.id < buffers.instance_id[idx]);
            if wins {
                buffers.depth[idx] = depth;
                buffers.instance_id[idx] = tri.id;
                buffers.rgb[idx * 3..idx * 3 + 3].copy_from_slice(&tri.rgb);
            }
        }
    }
}

/// Renders RGB, depth and instance-ID buffers for a scene.
pub fn rasterize(scene: &Scene, settings: &RenderSettings) -> FrameBuffers {
    let camera = &scene.camera;
    let mut buffers = FrameBuffers::new(camera.intrinsics.width, camera.intrinsics.height);
    for i in 0..buffers.rgb.len() {
        buffers.rgb[i] = BACKGROUND_RGB[i % 3];
    }

    let mut triangles: Vec<ShadedTriangle> = Vec::new();
    // Table: a finite quad at z = 0, instance id 0.
    let half = scene.table_extent / 2.0;
    let corners = [
        Vec3::new(-half, -half, 0.0),
        Vec3::new(half, -half, 0.0),
        Vec3::new(half, half, 0.0),
        Vec3::new(-half, half, 0.0),
    ];
    for tri in [[0, 1, 2], [0, 2, 3]] {
        let world = [corners[tri[0]], corners[tri[1]], corners[tri[2]]];
        push_world_triangle(
            &mut triangles,
            scene,
            world,
            Vec3::new(0.0, 0.0, 1.0),
            scene.table_color,
            0,
        );
    }
    for obj in &scene.objects {
        let mesh = match &obj.geometry {
            Geometry::Primitive(shape) => {
                tessellate(shape, settings.segments).expect("instance shapes tessellate")
            }
            Geometry::Mesh(mesh) => mesh.clone(),
        };
        for (t, normal) in mesh.triangles.iter().zip(&mesh.normals) {
            let world = [
                transform_point(&obj.pose, mesh.vertices[t[0] as usize]),
                transform_point(&obj.pose, mesh.vertices[t[1] as usize]),
                transform_point(&obj.pose, mesh.vertices[t[2] as usize]),
            ];
            let world_normal = obj.pose.rotation.apply(*normal);
            push_world_triangle(
                &mut triangles,
                scene,
                world,
                world_normal,
                obj.color,
                obj.instance_id,
            );
        }
    }

    for tri in &triangles {
        raster_triangle(&mut buffers, camera, tri);
    }
    buffers
}

fn push_world_triangle(
    out: &mut Vec<ShadedTriangle>,
    scene: &Scene,
    world: [Vec3; 3],
    normal: Vec3,
    color: [f64; 3],
    id: u32,
) {
    let centroid = (world[0] + world[1] + world[2]).scale(1.0 / 3.0);
    let rgb = shade(color, normal, centroid, scene);
    let cam = [
        transform_point(&scene.camera.extrinsic, world[0]),
        transform_point(&scene.camera.extrinsic, world[1]),
        transform_point(&scene.camera.extrinsic, world[2]),
    ];
    for clipped in clip_near(cam) {
        out.push(ShadedTriangle { cam: clipped, rgb, id });
    }
}

/// Mask-extreme bounding box: (x_min, y_min, w, h) with w = x_max − x_min.
/// `None` when the id never appears in the buffer.
pub fn bbox_from_mask(buffers: &FrameBuffers, id: u32) -> Option<(u32, u32, u32, u32)> {
    let mut found = false;
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (u32::MAX, 0, u32::MAX, 0);
    for y in 0..buffers.height {
        for x in 0..buffers.width {
            if buffers.id_at(x, y) == id {
                found = true;
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
    }
    found.then(|| (x_min, y_min, x_max - x_min, y_max - y_min))
}

/// Projects an object's manifold keypoints, pads them to K at the object
/// origin and assigns COCO visibility flags.
///
/// A keypoint is visible (flag 2) when its projection lands inside the
/// frame on a pixel owned by its own object; flag 1 when behind the camera,
/// out of bounds or covered by something else; flag 0 for padding.
pub fn annotate_keypoints(
    scene: &Scene,
    buffers: &FrameBuffers,
    object: &crate::scene::SceneObject,
) -> Vec<(f64, f64, u8)> {
    let raw: Vec<(Vec3, u8)> = object
        .manifold
        .keypoints()
        .iter()
        .map(|&kp| (kp, 2))
        .collect();
    let padded = pad_keypoints(&raw, object.k_budget)
        .expect("template invariant: manifold fits the budget");
    padded
        .iter()
        .map(|&(kp, base_flag)| {
            let world = transform_point(&object.pose, kp);
            match project(&scene.camera, world) {
                Some(p) => {
                    let flag = if base_flag == 0 {
                        0
                    } else {
                        visibility_flag(buffers, p.u, p.v, object.instance_id)
                    };
                    (p.u, p.v, flag)
                }
                None => (0.0, 0.0, if base_flag == 0 { 0 } else { 1 }),
            }
        })
        .collect()
}

fn visibility_flag(buffers: &FrameBuffers, u: f64, v: f64, id: u32) -> u8 {
    // floor(u) is half-up rounding of the continuous coordinate onto the
    // grid of pixel centers at u + 0.5.
    let px = u.floor() as i64;
    let py = v.floor() as i64;
    if px < 0 || py < 0 || px >= buffers.width as i64 || py >= buffers.height as i64 {
        return 1;
    }
    if buffers.id_at(px as u32, py as u32) == id {
        2
    } else {
        1
    }
}

/// Simple-family rule: the first keypoint should be visible when either is.
pub fn apply_simple_swap(keypoints: &mut [(f64, f64, u8)]) -> Result<(), RenderError> {
    if keypoints.len() != 2 {
        return Err(RenderError::SwapArity(keypoints.len()));
    }
    if keypoints[0].2 != 2 && keypoints[1].2 == 2 {
        keypoints.swap(0, 1);
    }
    Ok(())
}

/// One annotation per scene object with a non-empty mask; fully occluded
/// or off-screen objects are omitted.
pub fn annotate_scene(scene: &Scene, buffers: &FrameBuffers) -> Vec<AnnotatedObject> {
    let n = (buffers.width * buffers.height) as usize;
    let mut out = Vec::new();
    for obj in &scene.objects {
        let mut mask = vec![false; n];
        let mut area = 0u64;
        for (i, &id) in buffers.instance_id.iter().enumerate() {
            if id == obj.instance_id {
                mask[i] = true;
                area += 1;
            }
        }
        if area == 0 {
            continue;
        }
        let bbox = bbox_from_mask(buffers, obj.instance_id)
            .expect("non-empty mask has a bounding box");
        let mut keypoints = annotate_keypoints(scene, buffers, obj);
        if obj.k_budget == 2 {
            apply_simple_swap(&mut keypoints).expect("simple family has K = 2");
        }
        out.push(AnnotatedObject {
            instance_id: obj.instance_id,
            category_name: obj.category_name.clone(),
            bbox,
            mask,
            area,
            keypoints,
        });
    }
    out
}
