//! Object geometry: primitives, triangle meshes, grasp-manifold templates,
//! the OBJ subset loader and the keypoint sidecar format.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("line {line}: malformed OBJ record: {msg}")]
    ObjParse { line: usize, msg: String },
    #[error("line {line}: face index {index} out of range (mesh has {count} vertices)")]
    ObjIndexOutOfRange { line: usize, index: i64, count: usize },
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("triangle {0} references vertex index out of range")]
    IndexOutOfRange(usize),
    #[error("manifold needs at least 2 keypoints, got {0}")]
    TooFewKeypoints(usize),
    #[error("surface manifold needs at least 3 keypoints, got {0}")]
    SurfaceTooFewKeypoints(usize),
    #[error("manifold keypoints must be pairwise distinct")]
    DuplicateKeypoints,
    #[error("{got} keypoints exceed the budget K={budget}")]
    TooManyKeypoints { got: usize, budget: usize },
    #[error("unknown manifold kind {0:?}")]
    UnknownKind(String),
    #[error("sidecar annotation schema error: {0}")]
    Sidecar(String),
    #[error("tessellation needs segments >= 3, got {0}")]
    TooFewSegments(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrimitiveShape {
    /// Dimensions along x (length), y (width), z (height).
    Cuboid { length: f64, width: f64, height: f64 },
    /// Main axis along x.
    Cylinder { length: f64, radius: f64 },
    /// Main axis along x; total extent is length + 2·radius.
    Capsule { length: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Cuboid,
    Cylinder,
    Capsule,
}

impl PrimitiveShape {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            PrimitiveShape::Cuboid { .. } => PrimitiveKind::Cuboid,
            PrimitiveShape::Cylinder { .. } => PrimitiveKind::Cylinder,
            PrimitiveShape::Capsule { .. } => PrimitiveKind::Capsule,
        }
    }

    /// Length of the main axis (x extent for cuboids, body length otherwise).
    pub fn main_axis_length(&self) -> f64 {
        match *self {
            PrimitiveShape::Cuboid { length, .. } => length,
            PrimitiveShape::Cylinder { length, .. } => length,
            PrimitiveShape::Capsule { length, .. } => length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Unit per-triangle normals, parallel to `triangles`.
    pub normals: Vec<Vec3>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<TriMesh, ShapeError> {
        if triangles.is_empty() {
            return Err(ShapeError::EmptyMesh);
        }
        let mut normals = Vec::with_capacity(triangles.len());
        for (i, tri) in triangles.iter().enumerate() {
            for &idx in tri {
                if idx as usize >= vertices.len() {
                    return Err(ShapeError::IndexOutOfRange(i));
                }
            }
            let [a, b, c] = [
                vertices[tri[0] as usize],
                vertices[tri[1] as usize],
                vertices[tri[2] as usize],
            ];
            let n = (b - a).cross(c - a);
            if n.norm() < 1e-14 {
                return Err(ShapeError::DegenerateTriangle(i));
            }
            normals.push(n.normalized());
        }
        Ok(TriMesh { vertices, triangles, normals })
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::MAX, f64::MAX, f64::MAX);
        let mut hi = Vec3::new(f64::MIN, f64::MIN, f64::MIN);
        for v in &self.vertices {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        (lo, hi)
    }

    /// Wavefront OBJ text with positions and faces only.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Line,
    Surface,
}

/// Ordered grasp-manifold keypoints in the object frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspManifold {
    keypoints: Vec<Vec3>,
    kind: ManifoldKind,
}

impl GraspManifold {
    pub fn new(keypoints: Vec<Vec3>, kind: ManifoldKind) -> Result<GraspManifold, ShapeError> {
        if keypoints.len() < 2 {
            return Err(ShapeError::TooFewKeypoints(keypoints.len()));
        }
        if kind == ManifoldKind::Surface && keypoints.len() < 3 {
            return Err(ShapeError::SurfaceTooFewKeypoints(keypoints.len()));
        }
        for i in 0..keypoints.len() {
            for j in i + 1..keypoints.len() {
                if (keypoints[i] - keypoints[j]).norm() < 1e-12 {
                    return Err(ShapeError::DuplicateKeypoints);
                }
            }
        }
        Ok(GraspManifold { keypoints, kind })
    }

    pub fn keypoints(&self) -> &[Vec3] {
        &self.keypoints
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Primitive(PrimitiveShape),
    Mesh(TriMesh),
}

/// A category of objects to spawn: geometry plus its manifold template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub category_name: String,
    pub geometry: Geometry,
    pub manifold: GraspManifold,
    /// Keypoint budget K: 2 for the simple family, 10 for the complex one.
    pub k_budget: usize,
}

impl ObjectTemplate {
    pub fn new(
        category_name: impl Into<String>,
        geometry: Geometry,
        manifold: GraspManifold,
        k_budget: usize,
    ) -> Result<ObjectTemplate, ShapeError> {
        if manifold.len() > k_budget {
            return Err(ShapeError::TooManyKeypoints {
                got: manifold.len(),
                budget: k_budget,
            });
        }
        Ok(ObjectTemplate {
            category_name: category_name.into(),
            geometry,
            manifold,
            k_budget,
        })
    }
}

/// Main-axis line manifold: endpoints at ±L/2 through the object center.
pub fn manifold_for_primitive(shape: &PrimitiveShape) -> GraspManifold {
    let half = shape.main_axis_length() / 2.0;
    GraspManifold::new(
        vec![Vec3::new(-half, 0.0, 0.0), Vec3::new(half, 0.0, 0.0)],
        ManifoldKind::Line,
    )
    .expect("axis endpoints are distinct for positive lengths")
}

/// Per-primitive dimension ranges used by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrimitiveRanges {
    pub cuboid_length: (f64, f64),
    pub cuboid_width: (f64, f64),
    pub cuboid_height: (f64, f64),
    pub cylinder_length: (f64, f64),
    pub cylinder_radius: (f64, f64),
    pub capsule_length: (f64, f64),
    pub capsule_radius: (f64, f64),
    /// Probability of the degenerate "cube" branch (equal main dimensions).
    pub p_cube: f64,
}

impl Default for PrimitiveRanges {
    fn default() -> Self {
        PrimitiveRanges {
            cuboid_length: (0.10, 0.30),
            cuboid_width: (0.03, 0.10),
            cuboid_height: (0.02, 0.08),
            cylinder_length: (0.10, 0.28),
            cylinder_radius: (0.02, 0.05),
            capsule_length: (0.08, 0.22),
            capsule_radius: (0.02, 0.05),
            p_cube: 0.05,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    range.0 + rng.gen::<f64>() * (range.1 - range.0)
}

/// Samples randomized dimensions; the main axis always ends up longest.
pub fn sample_primitive_dims<R: Rng>(
    rng: &mut R,
    ranges: &PrimitiveRanges,
    kind: PrimitiveKind,
) -> PrimitiveShape {
    let cube = rng.gen::<f64>() < ranges.p_cube;
    match kind {
        PrimitiveKind::Cuboid => {
            let l = uniform(rng, ranges.cuboid_length);
            let w = uniform(rng, ranges.cuboid_width);
            let h = uniform(rng, ranges.cuboid_height);
            if cube {
                PrimitiveShape::Cuboid { length: l, width: l, height: l }
            } else {
                let mut dims = [l, w, h];
                dims.sort_by(|a, b| b.partial_cmp(a).unwrap());
                PrimitiveShape::Cuboid {
                    length: dims[0],
                    width: dims[1],
                    height: dims[2],
                }
            }
        }
        PrimitiveKind::Cylinder => {
            let length = uniform(rng, ranges.cylinder_length);
            let radius = uniform(rng, ranges.cylinder_radius);
            make_rod(cube, length, radius, |length, radius| PrimitiveShape::Cylinder {
                length,
                radius,
            })
        }
        PrimitiveKind::Capsule => {
            let length = uniform(rng, ranges.capsule_length);
            let radius = uniform(rng, ranges.capsule_radius);
            make_rod(cube, length, radius, |length, radius| PrimitiveShape::Capsule {
                length,
                radius,
            })
        }
    }
}

// Cylinder/capsule analog of the cuboid rule: length stays the largest
// extent; the cube branch pins length to the diameter.
fn make_rod(
    cube: bool,
    length: f64,
    radius: f64,
    build: impl Fn(f64, f64) -> PrimitiveShape,
) -> PrimitiveShape {
    if cube {
        build(2.0 * radius, radius)
    } else if length < 2.0 * radius {
        build(2.0 * radius, length / 2.0)
    } else {
        build(length, radius)
    }
}

/// Watertight triangle tessellation of a primitive.
pub fn tessellate(shape: &PrimitiveShape, segments: u32) -> Result<TriMesh, ShapeError> {
    if segments < 3 {
        return Err(ShapeError::TooFewSegments(segments));
    }
    let mesh = match *shape {
        PrimitiveShape::Cuboid { length, width, height } => tessellate_cuboid(length, width, height),
        PrimitiveShape::Cylinder { length, radius } => {
            tessellate_cylinder(length, radius, segments as usize)
        }
        PrimitiveShape::Capsule { length, radius } => {
            tessellate_capsule(length, radius, segments as usize)
        }
    };
    orient_outward(mesh)
}

// Primitives are convex and centered at the origin, so any inward-facing
// triangle can be detected by its normal pointing toward the center.
pub(crate) fn orient_outward(mut mesh: TriMesh) -> Result<TriMesh, ShapeError> {
    for i in 0..mesh.triangles.len() {
        let t = mesh.triangles[i];
        let centroid = (mesh.vertices[t[0] as usize]
            + mesh.vertices[t[1] as usize]
            + mesh.vertices[t[2] as usize])
            .scale(1.0 / 3.0);
        if mesh.normals[i].dot(centroid) < 0.0 {
            mesh.triangles[i] = [t[0], t[2], t[1]];
            mesh.normals[i] = -mesh.normals[i];
        }
    }
    Ok(mesh)
}

fn tessellate_cuboid(length: f64, width: f64, height: f64) -> TriMesh {
    let (hx, hy, hz) = (length / 2.0, width / 2.0, height / 2.0);
    let mut vertices = Vec::with_capacity(8);
    for &x in &[-hx, hx] {
        for &y in &[-hy, hy] {
            for &z in &[-hz, hz] {
                vertices.push(Vec3::new(x, y, z));
            }
        }
    }
    // Vertex index = 4*xi + 2*yi + zi.
    let quads = [
        [0, 1, 3, 2], // -x
        [4, 6, 7, 5], // +x
        [0, 4, 5, 1], // -y
        [2, 3, 7, 6], // +y
        [0, 2, 6, 4], // -z
        [1, 5, 7, 3], // +z
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    TriMesh::new(vertices, triangles).expect("cuboid tessellation is valid")
}

fn ring_angle(j: usize, n: usize) -> f64 {
    std::f64::consts::TAU * j as f64 / n as f64
}

fn tessellate_cylinder(length: f64, radius: f64, n: usize) -> TriMesh {
    let hx = length / 2.0;
    let mut vertices = Vec::new();
    for &x in &[-hx, hx] {
        for j in 0..n {
            let a = ring_angle(j, n);
            vertices.push(Vec3::new(x, radius * a.cos(), radius * a.sin()));
        }
    }
    let cap_neg = vertices.len() as u32;
    vertices.push(Vec3::new(-hx, 0.0, 0.0));
    let cap_pos = vertices.len() as u32;
    vertices.push(Vec3::new(hx, 0.0, 0.0));

    let mut triangles = Vec::new();
    for j in 0..n {
        let j1 = (j + 1) % n;
        let (a, b) = (j as u32, j1 as u32);
        let (c, d) = ((n + j) as u32, (n + j1) as u32);
        triangles.push([a, c, d]);
        triangles.push([a, d, b]);
        triangles.push([cap_neg, b, a]);
        triangles.push([cap_pos, c, d]);
    }
    TriMesh::new(vertices, triangles).expect("cylinder tessellation is valid")
}

fn tessellate_capsule(length: f64, radius: f64, n: usize) -> TriMesh {
    let hx = length / 2.0;
    let rings = (n / 4).max(2);
    let mut vertices = Vec::new();
    // Latitude rings for each cap, from the rim (lat 0) toward the pole.
    // Ring layout: [neg rim .. neg inner][pos rim .. pos inner][neg pole][pos pole]
    for sign in [-1.0, 1.0] {
        for i in 0..rings {
            let lat = std::f64::consts::FRAC_PI_2 * i as f64 / rings as f64;
            let x = sign * (hx + radius * lat.sin());
            let r = radius * lat.cos();
            for j in 0..n {
                let a = ring_angle(j, n);
                vertices.push(Vec3::new(x, r * a.cos(), r * a.sin()));
            }
        }
    }
    let pole_neg = vertices.len() as u32;
    vertices.push(Vec3::new(-(hx + radius), 0.0, 0.0));
    let pole_pos = vertices.len() as u32;
    vertices.push(Vec3::new(hx + radius, 0.0, 0.0));

    let ring_start = |side: usize, i: usize| (side * rings + i) * n;
    let mut triangles = Vec::new();
    // Body between the two rims.
    for j in 0..n {
        let j1 = (j + 1) % n;
        let (a, b) = ((ring_start(0, 0) + j) as u32, (ring_start(0, 0) + j1) as u32);
        let (c, d) = ((ring_start(1, 0) + j) as u32, (ring_start(1, 0) + j1) as u32);
        triangles.push([a, c, d]);
        triangles.push([a, d, b]);
    }
    // Cap bands and pole fans.
    for side in 0..2 {
        let pole = if side == 0 { pole_neg } else { pole_pos };
        for i in 0..rings - 1 {
            for j in 0..n {
                let j1 = (j + 1) % n;
                let a = (ring_start(side, i) + j) as u32;
                let b = (ring_start(side, i) + j1) as u32;
                let c = (ring_start(side, i + 1) + j) as u32;
                let d = (ring_start(side, i + 1) + j1) as u32;
                triangles.push([a, b, c]);
                triangles.push([b, d, c]);
            }
        }
        for j in 0..n {
            let j1 = (j + 1) % n;
            let a = (ring_start(side, rings - 1) + j) as u32;
            let b = (ring_start(side, rings - 1) + j1) as u32;
            triangles.push([a, b, pole]);
        }
    }
    TriMesh::new(vertices, triangles).expect("capsule tessellation is valid")
}

/// Parses the `v`/`f` subset of Wavefront OBJ, fan-triangulating polygons.
pub fn load_obj(text: &str) -> Result<TriMesh, ShapeError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .map(|s| {
                        s.parse::<f64>().map_err(|_| ShapeError::ObjParse {
                            line: line_no,
                            msg: format!("bad vertex coordinate {s:?}"),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                if coords.len() < 3 {
                    return Err(ShapeError::ObjParse {
                        line: line_no,
                        msg: "vertex needs 3 coordinates".into(),
                    });
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut indices = Vec::new();
                for field in fields {
                    let head = field.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| ShapeError::ObjParse {
                        line: line_no,
                        msg: format!("bad face index {field:?}"),
                    })?;
                    if i < 1 || i as usize > vertices.len() {
                        return Err(ShapeError::ObjIndexOutOfRange {
                            line: line_no,
                            index: i,
                            count: vertices.len(),
                        });
                    }
                    indices.push((i - 1) as u32);
                }
                if indices.len() < 3 {
                    return Err(ShapeError::ObjParse {
                        line: line_no,
                        msg: "face needs at least 3 indices".into(),
                    });
                }
                for k in 1..indices.len() - 1 {
                    triangles.push([indices[0], indices[k], indices[k + 1]]);
                }
            }
            // vt/vn/comments and other records are ignored.
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Appends (origin, v=0) entries until the list has length `k_budget`.
pub fn pad_keypoints(
    kps: &[(Vec3, u8)],
    k_budget: usize,
) -> Result<Vec<(Vec3, u8)>, ShapeError> {
    if kps.len() > k_budget {
        return Err(ShapeError::TooManyKeypoints {
            got: kps.len(),
            budget: k_budget,
        });
    }
    let mut out = kps.to_vec();
    out.resize(k_budget, (Vec3::ZERO, 0));
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarDoc {
    category: String,
    kind: String,
    keypoints: Vec<[f64; 3]>,
}

/// Parses a `.manifold.json` sidecar into a validated manifold.
pub fn load_keypoint_annotation(
    text: &str,
    k_budget: usize,
) -> Result<(GraspManifold, String), ShapeError> {
    let doc: SidecarDoc =
        serde_json::from_str(text).map_err(|e| ShapeError::Sidecar(e.to_string()))?;
    let kind = match doc.kind.as_str() {
        "line" => ManifoldKind::Line,
        "surface" => ManifoldKind::Surface,
        other => return Err(ShapeError::UnknownKind(other.to_string())),
    };
    if doc.keypoints.len() > k_budget {
        return Err(ShapeError::TooManyKeypoints {
            got: doc.keypoints.len(),
            budget: k_budget,
        });
    }
    let kps = doc
        .keypoints
        .iter()
        .map(|p| Vec3::new(p[0], p[1], p[2]))
        .collect();
    Ok((GraspManifold::new(kps, kind)?, doc.category))
}
