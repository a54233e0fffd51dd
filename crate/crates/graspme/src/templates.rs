//! Built-in object template families.
//!
//! The simple family holds the three randomized primitives (K = 2). The
//! complex family holds five procedural stand-in meshes with hand-authored
//! manifolds (K = 10); user meshes with `.manifold.json` sidecars can be
//! loaded instead via [`load_template_dir`].

use std::path::Path;

use crate::geometry::Vec3;
use crate::shapes::{
    load_keypoint_annotation, load_obj, manifold_for_primitive, Geometry, GraspManifold,
    ManifoldKind, ObjectTemplate, PrimitiveShape, ShapeError, TriMesh,
};

pub const SIMPLE_K: usize = 2;
pub const COMPLEX_K: usize = 10;

/// Cuboid, cylinder and capsule prototypes; dimensions are re-sampled per
/// scene instance.
pub fn simple_templates() -> Vec<ObjectTemplate> {
    let prototypes = [
        ("cuboid", PrimitiveShape::Cuboid { length: 0.2, width: 0.06, height: 0.05 }),
        ("cylinder", PrimitiveShape::Cylinder { length: 0.2, radius: 0.03 }),
        ("capsule", PrimitiveShape::Capsule { length: 0.15, radius: 0.03 }),
    ];
    prototypes
        .into_iter()
        .map(|(name, shape)| {
            ObjectTemplate::new(
                name,
                Geometry::Primitive(shape),
                manifold_for_primitive(&shape),
                SIMPLE_K,
            )
            .expect("primitive templates are valid")
        })
        .collect()
}

/// Five stand-in complex objects. Keypoint counts vary (3-4) so origin
/// padding and the clip/full distinction are exercised.
pub fn complex_templates() -> Vec<ObjectTemplate> {
    vec![
        template("banana", banana_mesh(), banana_manifold()),
        template("bottle", bottle_mesh(), bottle_manifold()),
        template("mug", mug_mesh(), mug_manifold()),
        template("gun", gun_mesh(), gun_manifold()),
        template("camera", camera_mesh(), camera_manifold()),
    ]
}

/// Loads every `<name>.obj` + `<name>.manifold.json` pair in `dir`.
pub fn load_template_dir(dir: &Path) -> Result<Vec<ObjectTemplate>, TemplateDirError> {
    let mut templates = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(TemplateDirError::Io)?
        .collect::<Result<_, _>>()
        .map_err(TemplateDirError::Io)?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("obj") {
            continue;
        }
        let sidecar = path.with_extension("manifold.json");
        let mesh_text = std::fs::read_to_string(&path).map_err(TemplateDirError::Io)?;
        let sidecar_text = std::fs::read_to_string(&sidecar).map_err(TemplateDirError::Io)?;
        let mesh = load_obj(&mesh_text)
            .map_err(|e| TemplateDirError::Shape(path.display().to_string(), e))?;
        let (manifold, category) = load_keypoint_annotation(&sidecar_text, COMPLEX_K)
            .map_err(|e| TemplateDirError::Shape(sidecar.display().to_string(), e))?;
        templates.push(
            ObjectTemplate::new(category, Geometry::Mesh(mesh), manifold, COMPLEX_K)
                .map_err(|e| TemplateDirError::Shape(path.display().to_string(), e))?,
        );
    }
    if templates.is_empty() {
        return Err(TemplateDirError::Empty(dir.display().to_string()));
    }
    Ok(templates)
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateDirError {
    #[error("reading template directory: {0}")]
    Io(std::io::Error),
    #[error("{0}: {1}")]
    Shape(String, ShapeError),
    #[error("no .obj/.manifold.json pairs found in {0}")]
    Empty(String),
}

fn template(name: &str, mesh: TriMesh, manifold: GraspManifold) -> ObjectTemplate {
    ObjectTemplate::new(name, Geometry::Mesh(mesh), manifold, COMPLEX_K)
        .expect("stand-in templates are valid")
}

fn manifold(kind: ManifoldKind, pts: &[[f64; 3]]) -> GraspManifold {
    GraspManifold::new(
        pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
        kind,
    )
    .expect("stand-in manifolds are valid")
}

// --- mesh builders ---

fn merge(meshes: &[TriMesh]) -> TriMesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for m in meshes {
        let base = vertices.len() as u32;
        vertices.extend_from_slice(&m.vertices);
        triangles.extend(m.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }
    TriMesh::new(vertices, triangles).expect("merged stand-in mesh is valid")
}

fn translated(mesh: TriMesh, offset: Vec3) -> TriMesh {
    TriMesh::new(
        mesh.vertices.iter().map(|&v| v + offset).collect(),
        mesh.triangles,
    )
    .expect("translation preserves validity")
}

fn box_mesh(min: Vec3, max: Vec3) -> TriMesh {
    let center = (min + max).scale(0.5);
    let dims = max - min;
    let unit = crate::shapes::tessellate(
        &PrimitiveShape::Cuboid { length: dims.x, width: dims.y, height: dims.z },
        3,
    )
    .expect("box tessellation");
    translated(unit, center)
}

fn cylinder_mesh(length: f64, radius: f64, center: Vec3, segments: u32) -> TriMesh {
    let unit = crate::shapes::tessellate(&PrimitiveShape::Cylinder { length, radius }, segments)
        .expect("cylinder tessellation");
    translated(unit, center)
}

fn ellipsoid_mesh(rx: f64, ry: f64, rz: f64, n: usize) -> TriMesh {
    let rings = n / 2;
    let mut vertices = Vec::new();
    vertices.push(Vec3::new(-rx, 0.0, 0.0));
    for i in 1..rings {
        let lat = std::f64::consts::PI * i as f64 / rings as f64 - std::f64::consts::FRAC_PI_2;
        for j in 0..n {
            let lon = std::f64::consts::TAU * j as f64 / n as f64;
            vertices.push(Vec3::new(
                rx * lat.sin(),
                ry * lat.cos() * lon.cos(),
                rz * lat.cos() * lon.sin(),
            ));
        }
    }
    vertices.push(Vec3::new(rx, 0.0, 0.0));
    let last = vertices.len() as u32 - 1;
    let ring = |i: usize, j: usize| (1 + (i - 1) * n + j % n) as u32;
    let mut triangles = Vec::new();
    for j in 0..n {
        triangles.push([0, ring(1, j + 1), ring(1, j)]);
        triangles.push([last, ring(rings - 1, j), ring(rings - 1, j + 1)]);
    }
    for i in 1..rings - 1 {
        for j in 0..n {
            triangles.push([ring(i, j), ring(i, j + 1), ring(i + 1, j)]);
            triangles.push([ring(i, j + 1), ring(i + 1, j + 1), ring(i + 1, j)]);
        }
    }
    let mesh = TriMesh::new(vertices, triangles).expect("ellipsoid tessellation");
    crate::shapes::orient_outward(mesh).expect("ellipsoid orientation")
}

fn banana_mesh() -> TriMesh {
    ellipsoid_mesh(0.09, 0.02, 0.025, 24)
}

fn banana_manifold() -> GraspManifold {
    manifold(
        ManifoldKind::Line,
        &[
            [-0.07, 0.0, 0.0],
            [-0.025, 0.0, 0.008],
            [0.025, 0.0, 0.008],
            [0.07, 0.0, 0.0],
        ],
    )
}

fn bottle_mesh() -> TriMesh {
    merge(&[
        cylinder_mesh(0.16, 0.035, Vec3::new(-0.02, 0.0, 0.0), 20),
        cylinder_mesh(0.08, 0.012, Vec3::new(0.1, 0.0, 0.0), 12),
    ])
}

fn bottle_manifold() -> GraspManifold {
    manifold(
        ManifoldKind::Line,
        &[
            [-0.09, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [0.07, 0.0, 0.0],
            [0.13, 0.0, 0.0],
        ],
    )
}

fn mug_mesh() -> TriMesh {
    merge(&[
        box_mesh(Vec3::new(-0.045, -0.035, -0.045), Vec3::new(0.045, 0.035, 0.045)),
        box_mesh(Vec3::new(0.045, -0.01, -0.03), Vec3::new(0.075, 0.01, 0.03)),
    ])
}

fn mug_manifold() -> GraspManifold {
    manifold(
        ManifoldKind::Line,
        &[
            [0.06, 0.0, -0.025],
            [0.06, 0.0, -0.008],
            [0.06, 0.0, 0.008],
            [0.06, 0.0, 0.025],
        ],
    )
}

fn gun_mesh() -> TriMesh {
    merge(&[
        box_mesh(Vec3::new(-0.08, -0.015, 0.0), Vec3::new(0.08, 0.015, 0.03)),
        box_mesh(Vec3::new(-0.08, -0.015, -0.07), Vec3::new(-0.05, 0.015, 0.0)),
    ])
}

fn gun_manifold() -> GraspManifold {
    manifold(
        ManifoldKind::Line,
        &[
            [-0.065, 0.0, -0.06],
            [-0.065, 0.0, -0.03],
            [-0.065, 0.0, -0.005],
        ],
    )
}

fn camera_mesh() -> TriMesh {
    box_mesh(Vec3::new(-0.055, -0.02, -0.035), Vec3::new(0.055, 0.02, 0.035))
}

fn camera_manifold() -> GraspManifold {
    manifold(
        ManifoldKind::Surface,
        &[
            [-0.04, 0.0, -0.025],
            [0.04, 0.0, -0.025],
            [0.04, 0.0, 0.025],
            [-0.04, 0.0, 0.025],
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_have_expected_budgets() {
        let simple = simple_templates();
        assert_eq!(simple.len(), 3);
        assert!(simple.iter().all(|t| t.k_budget == 2 && t.manifold.len() == 2));

        let complex = complex_templates();
        assert_eq!(complex.len(), 5);
        for t in &complex {
            assert_eq!(t.k_budget, 10);
            assert!(t.manifold.len() >= 3 && t.manifold.len() <= 10);
            match &t.geometry {
                Geometry::Mesh(m) => assert!(!m.triangles.is_empty()),
                _ => panic!("complex templates are meshes"),
            }
        }
        assert!(complex
            .iter()
            .any(|t| t.manifold.kind() == ManifoldKind::Surface));
    }

    #[test]
    fn standin_keypoints_inside_mesh_bounds() {
        for t in complex_templates() {
            let mesh = match &t.geometry {
                Geometry::Mesh(m) => m,
                _ => unreachable!(),
            };
            let (lo, hi) = mesh.aabb();
            for kp in t.manifold.keypoints() {
                assert!(kp.x >= lo.x && kp.x <= hi.x, "{} kp {kp:?}", t.category_name);
                assert!(kp.y >= lo.y && kp.y <= hi.y);
                assert!(kp.z >= lo.z && kp.z <= hi.z);
            }
        }
    }

    #[test]
    fn template_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for t in complex_templates() {
            let mesh = match &t.geometry {
                Geometry::Mesh(m) => m,
                _ => unreachable!(),
            };
            std::fs::write(dir.path().join(format!("{}.obj", t.category_name)), mesh.to_obj())
                .unwrap();
            let kps: Vec<[f64; 3]> = t
                .manifold
                .keypoints()
                .iter()
                .map(|p| [p.x, p.y, p.z])
                .collect();
            let doc = serde_json::json!({
                "category": t.category_name,
                "kind": match t.manifold.kind() {
                    ManifoldKind::Line => "line",
                    ManifoldKind::Surface => "surface",
                },
                "keypoints": kps,
            });
            std::fs::write(
                dir.path().join(format!("{}.manifold.json", t.category_name)),
                serde_json::to_string(&doc).unwrap(),
            )
            .unwrap();
        }
        let loaded = load_template_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), 5);
        let mut names: Vec<_> = loaded.iter().map(|t| t.category_name.clone()).collect();
        names.sort();
        assert_eq!(names, ["banana", "bottle", "camera", "gun", "mug"]);
    }
}
