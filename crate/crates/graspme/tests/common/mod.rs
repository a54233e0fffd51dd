//! Shared acceptance-test helpers: an independent ray-casting renderer
//! used as an oracle for the z-buffer rasterizer, plus an exhaustive
//! precision/recall AP reference.

use graspme::geometry::{transform_point, Vec3};
use graspme::render::FrameBuffers;
use graspme::scene::Scene;
use graspme::shapes::{tessellate, Geometry};

pub struct WorldTriangle {
    pub v: [Vec3; 3],
    pub id: u32,
}

/// Collects all world-space triangles of a scene, table first (id 0).
pub fn scene_triangles(scene: &Scene, segments: u32) -> Vec<WorldTriangle> {
    let mut out = Vec::new();
    let half = scene.table_extent / 2.0;
    let corners = [
        Vec3::new(-half, -half, 0.0),
        Vec3::new(half, -half, 0.0),
        Vec3::new(half, half, 0.0),
        Vec3::new(-half, half, 0.0),
    ];
    for tri in [[0, 1, 2], [0, 2, 3]] {
        out.push(WorldTriangle {
            v: [corners[tri[0]], corners[tri[1]], corners[tri[2]]],
            id: 0,
        });
    }
    for obj in &scene.objects {
        let mesh = match &obj.geometry {
            Geometry::Primitive(shape) => tessellate(shape, segments).unwrap(),
            Geometry::Mesh(mesh) => mesh.clone(),
        };
        for t in &mesh.triangles {
            out.push(WorldTriangle {
                v: [
                    transform_point(&obj.pose, mesh.vertices[t[0] as usize]),
                    transform_point(&obj.pose, mesh.vertices[t[1] as usize]),
                    transform_point(&obj.pose, mesh.vertices[t[2] as usize]),
                ],
                id: obj.instance_id,
            });
        }
    }
    out
}

// Moller-Trumbore, no culling. Returns the ray parameter t.
fn ray_triangle(origin: Vec3, dir: Vec3, tri: &WorldTriangle) -> Option<f64> {
    let e1 = tri.v[1] - tri.v[0];
    let e2 = tri.v[2] - tri.v[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri.v[0];
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t >= 1e-4).then_some(t)
}

/// Per-pixel instance ids computed by casting a ray through every pixel
/// center; nearest hit wins, depth ties go to the lower id, no hit = 0.
pub fn raycast_instance_ids(scene: &Scene, segments: u32) -> Vec<u32> {
    let triangles = scene_triangles(scene, segments);
    let cam = &scene.camera;
    let k = &cam.intrinsics;
    let inv = cam.extrinsic.inverse();
    let eye = inv.translation;
    let (w, h) = (k.width, k.height);
    let mut ids = vec![0u32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let dir_cam = Vec3::new(
                (x as f64 + 0.5 - k.cx) / k.fx,
                (y as f64 + 0.5 - k.cy) / k.fy,
                1.0,
            );
            // eye + t*dir has camera coordinates t*dir_cam, so t is depth
            let dir = inv.rotation.apply(dir_cam);
            let mut best: Option<(f64, u32)> = None;
            for tri in &triangles {
                if let Some(t) = ray_triangle(eye, dir, tri) {
                    let replace = match best {
                        None => true,
                        Some((bt, bid)) => {
                            t < bt - 1e-12 || ((t - bt).abs() <= 1e-12 && tri.id < bid)
                        }
                    };
                    if replace {
                        best = Some((t, tri.id));
                    }
                }
            }
            ids[(y * w + x) as usize] = best.map_or(0, |(_, id)| id);
        }
    }
    ids
}

/// True when the pixel touches an instance-id boundary (or the frame
/// border) in the given id buffer.
pub fn is_edge_pixel(ids: &[u32], w: u32, h: u32, x: u32, y: u32) -> bool {
    let center = ids[(y * w + x) as usize];
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                return true;
            }
            if ids[(ny as u32 * w + nx as u32) as usize] != center {
                return true;
            }
        }
    }
    false
}

/// Visibility flag recomputed from an arbitrary id buffer with the same
/// pixel convention as the production annotator.
pub fn flag_from_ids(ids: &[u32], w: u32, h: u32, u: f64, v: f64, id: u32) -> u8 {
    let (px, py) = (u.floor() as i64, v.floor() as i64);
    if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
        return 1;
    }
    if ids[(py as u64 * w as u64 + px as u64) as usize] == id {
        2
    } else {
        1
    }
}

#[allow(dead_code)]
pub fn buffers_ids(buffers: &FrameBuffers) -> &[u32] {
    &buffers.instance_id
}

/// Exhaustive reference AP: per threshold, greedy matching over the
/// score-sorted predictions, then a direct scan over the 101 recall
/// points taking max precision at recall >= r.
#[allow(dead_code)]
pub fn reference_ap(
    gt: &[(u64, u32)],                 // (image_id, category_id)
    preds: &[(u64, u32, f64)],         // (image_id, category_id, score)
    sim: &dyn Fn(usize, usize) -> f64, // (pred index, gt index)
    thresholds: &[f64],
) -> f64 {
    let mut cats: Vec<u32> = gt.iter().map(|g| g.1).collect();
    cats.sort_unstable();
    cats.dedup();
    if cats.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &cat in &cats {
        let gt_idx: Vec<usize> =
            (0..gt.len()).filter(|&i| gt[i].1 == cat).collect();
        let mut pred_idx: Vec<usize> =
            (0..preds.len()).filter(|&i| preds[i].1 == cat).collect();
        pred_idx.sort_by(|&a, &b| {
            preds[b].2.partial_cmp(&preds[a].2).unwrap().then(a.cmp(&b))
        });
        let mut ap_sum = 0.0;
        for &t in thresholds {
            let mut taken = vec![false; gt_idx.len()];
            let mut tps = Vec::new();
            for &p in &pred_idx {
                let mut best: Option<(usize, f64)> = None;
                for (slot, &g) in gt_idx.iter().enumerate() {
                    if taken[slot] || gt[g].0 != preds[p].0 {
                        continue;
                    }
                    let s = sim(p, g);
                    if s >= t && best.map_or(true, |(_, bs)| s > bs) {
                        best = Some((slot, s));
                    }
                }
                if let Some((slot, _)) = best {
                    taken[slot] = true;
                    tps.push(true);
                } else {
                    tps.push(false);
                }
            }
            // direct 101-point scan, no precomputed envelope
            let mut ap = 0.0;
            for step in 0..=100 {
                let r = step as f64 / 100.0;
                let mut best_p = 0.0_f64;
                let mut tp = 0usize;
                for (i, &flag) in tps.iter().enumerate() {
                    if flag {
                        tp += 1;
                    }
                    let recall = tp as f64 / gt_idx.len() as f64;
                    if recall + 1e-12 >= r {
                        best_p = best_p.max(tp as f64 / (i + 1) as f64);
                    }
                }
                ap += best_p;
            }
            ap_sum += ap / 101.0;
        }
        total += ap_sum / thresholds.len() as f64;
    }
    total / cats.len() as f64 * 100.0
}
