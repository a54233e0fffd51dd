//! Camera model, rigid transforms, pinhole projection and hemisphere
//! camera sampling.
//!
//! Convention: right-handed frames, camera looks along its +Z axis,
//! +X right, +Y down in image space.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("look_at direction is degenerate: {0}")]
    DegenerateDirection(String),
    #[error("invalid hemisphere parameters: {0}")]
    InvalidHemisphere(String),
}

/// 3-vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3 {
            rows: [[r0.x, r0.y, r0.z], [r1.x, r1.y, r1.z], [r2.x, r2.y, r2.z]],
        }
    }

    /// Rotation by `angle` radians about the X axis.
    pub fn rot_x(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3 {
            rows: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        }
    }

    /// Rotation by `angle` radians about the Y axis.
    pub fn rot_y(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3 {
            rows: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        }
    }

    /// Rotation by `angle` radians about the Z axis.
    pub fn rot_z(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3 {
            rows: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.rows[0][0] * v.x + self.rows[0][1] * v.y + self.rows[0][2] * v.z,
            self.rows[1][0] * v.x + self.rows[1][1] * v.y + self.rows[1][2] * v.z,
            self.rows[2][0] * v.x + self.rows[2][1] * v.y + self.rows[2][2] * v.z,
        )
    }

    pub fn mul(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        Mat3 { rows: out }
    }

    pub fn transpose(&self) -> Mat3 {
        let r = &self.rows;
        Mat3 {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    /// Max absolute entry of RᵀR − I; zero for an orthonormal matrix.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.transpose().mul(self);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((m.rows[i][j] - target).abs());
            }
        }
        worst
    }
}

/// Rigid transform: p ↦ R·p + t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Pose {
        Pose { rotation, translation }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -rt.apply(self.translation),
        }
    }

    /// self ∘ other: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.mul(&other.rotation),
            translation: self.rotation.apply(other.translation) + self.translation,
        }
    }
}

pub fn transform_point(pose: &Pose, p: Vec3) -> Vec3 {
    pose.rotation.apply(p) + pose.translation
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    /// 512x512, 60 degree vertical field of view, centered principal point.
    pub fn default_for_size(width: u32, height: u32) -> CameraIntrinsics {
        let f = height as f64 / 2.0 / (30.0_f64.to_radians()).tan();
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    /// World → camera frame; the camera looks along its +Z axis.
    pub extrinsic: Pose,
}

/// Sub-pixel image coordinates with camera-Z depth in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects a world point; `None` encodes behind-camera. Out-of-bounds
/// pixels are returned as-is, callers apply bounds.
pub fn project(camera: &Camera, world_point: Vec3) -> Option<PixelPoint> {
    let p = transform_point(&camera.extrinsic, world_point);
    if p.z <= 0.0 {
        return None;
    }
    let k = &camera.intrinsics;
    Some(PixelPoint {
        u: k.cx + k.fx * p.x / p.z,
        v: k.cy + k.fy * p.y / p.z,
        depth: p.z,
    })
}

/// World→camera pose with +Z pointing from `eye` toward `target`.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Pose, GeometryError> {
    let forward = target - eye;
    if forward.norm() < 1e-12 {
        return Err(GeometryError::DegenerateDirection(
            "eye and target coincide".into(),
        ));
    }
    let z = forward.normalized();
    let x = up.cross(z);
    if x.norm() < 1e-9 {
        return Err(GeometryError::DegenerateDirection(
            "up is parallel to the view direction".into(),
        ));
    }
    let x = x.normalized();
    let y = z.cross(x);
    let rotation = Mat3::from_rows(x, y, z);
    Ok(Pose {
        rotation,
        translation: -rotation.apply(eye),
    })
}

/// Samples a camera on an upper hemisphere around `center`, looking at it.
pub fn sample_hemisphere_camera<R: Rng>(
    rng: &mut R,
    center: Vec3,
    r_min: f64,
    r_max: f64,
    elev_min: f64,
    elev_max: f64,
    intrinsics: CameraIntrinsics,
) -> Result<Camera, GeometryError> {
    if !(r_min > 0.0 && r_min <= r_max) {
        return Err(GeometryError::InvalidHemisphere(format!(
            "radius range [{r_min}, {r_max}]"
        )));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2 + 1e-12).contains(&elev_min)
        || elev_min > elev_max
        || elev_max > std::f64::consts::FRAC_PI_2 + 1e-12
    {
        return Err(GeometryError::InvalidHemisphere(format!(
            "elevation range [{elev_min}, {elev_max}]"
        )));
    }
    let d = r_min + rng.gen::<f64>() * (r_max - r_min);
    let elev = elev_min + rng.gen::<f64>() * (elev_max - elev_min);
    let azim = rng.gen::<f64>() * std::f64::consts::TAU;
    let eye = center
        + Vec3::new(
            d * elev.cos() * azim.cos(),
            d * elev.cos() * azim.sin(),
            d * elev.sin(),
        );
    // At the pole the view direction is parallel to world-up; fall back to +X.
    let up = if (std::f64::consts::FRAC_PI_2 - elev).abs() < 1e-6 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let extrinsic = look_at(eye, center, up)?;
    Ok(Camera { intrinsics, extrinsic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_vec_close(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn transform_identity() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&Pose::IDENTITY, p), p);
    }

    #[test]
    fn transform_pure_translation() {
        let pose = Pose::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, 5.0));
        assert_eq!(
            transform_point(&pose, Vec3::ZERO),
            Vec3::new(0.0, 0.0, 5.0)
        );
    }

    #[test]
    fn transform_rot_z_quarter_turn() {
        let pose = Pose::new(Mat3::rot_z(std::f64::consts::FRAC_PI_2), Vec3::ZERO);
        assert_vec_close(
            transform_point(&pose, Vec3::new(1.0, 0.0, 0.0)),
            Vec3::new(0.0, 1.0, 0.0),
            1e-9,
        );
    }

    #[test]
    fn pose_compose_inverse_is_identity() {
        let pose = Pose::new(
            Mat3::rot_z(0.7).mul(&Mat3::rot_x(-1.1)),
            Vec3::new(0.3, -2.0, 1.5),
        );
        let ident = pose.compose(&pose.inverse());
        assert!(ident.rotation.orthonormality_defect() < 1e-9);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ident.rotation.rows[i][j] - target).abs() < 1e-9);
            }
        }
        assert!(ident.translation.norm() < 1e-9);
    }

    fn test_camera(extrinsic: Pose) -> Camera {
        Camera {
            intrinsics: CameraIntrinsics {
                fx: 512.0,
                fy: 512.0,
                cx: 256.0,
                cy: 256.0,
                width: 512,
                height: 512,
            },
            extrinsic,
        }
    }

    #[test]
    fn project_optical_axis() {
        let cam = test_camera(Pose::IDENTITY);
        let p = project(&cam, Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (256.0, 256.0, 1.0));
    }

    #[test]
    fn project_off_axis() {
        let cam = test_camera(Pose::IDENTITY);
        let p = project(&cam, Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((p.u - 307.2).abs() < 1e-9);
        assert_eq!(p.v, 256.0);
    }

    #[test]
    fn project_behind_camera() {
        let cam = test_camera(Pose::IDENTITY);
        assert!(project(&cam, Vec3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn look_at_axis_aligned() {
        let pose = look_at(
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::ZERO,
            Vec3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        assert_vec_close(transform_point(&pose, Vec3::ZERO), Vec3::new(0.0, 0.0, 1.0), 1e-9);
    }

    #[test]
    fn look_at_from_x() {
        let pose = look_at(
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let mapped = transform_point(&pose, Vec3::ZERO);
        assert_vec_close(mapped, Vec3::new(0.0, 0.0, 1.0), 1e-9);
        assert!(pose.rotation.orthonormality_defect() < 1e-9);
    }

    #[test]
    fn look_at_degenerate() {
        let p = Vec3::new(1.0, 1.0, 1.0);
        assert!(look_at(p, p, Vec3::new(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn hemisphere_pole_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cam = sample_hemisphere_camera(
            &mut rng,
            Vec3::ZERO,
            1.0,
            1.0,
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            CameraIntrinsics::default_for_size(512, 512),
        )
        .unwrap();
        let eye = cam.extrinsic.inverse().translation;
        assert_vec_close(eye, Vec3::new(0.0, 0.0, 1.0), 1e-9);
    }

    #[test]
    fn hemisphere_ranges_and_determinism() {
        let center = Vec3::new(0.1, -0.2, 0.0);
        let k = CameraIntrinsics::default_for_size(512, 512);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let cam =
                sample_hemisphere_camera(&mut rng, center, 0.8, 1.4, 0.5, 1.4, k).unwrap();
            let eye = cam.extrinsic.inverse().translation;
            let d = (eye - center).norm();
            assert!((0.8..=1.4 + 1e-9).contains(&d));
            assert!(eye.z > center.z);
            assert!(cam.extrinsic.rotation.orthonormality_defect() < 1e-9);
        }
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let ca = sample_hemisphere_camera(&mut a, center, 0.8, 1.4, 0.5, 1.4, k).unwrap();
        let cb = sample_hemisphere_camera(&mut b, center, 0.8, 1.4, 0.5, 1.4, k).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn hemisphere_azimuth_uniformity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = CameraIntrinsics::default_for_size(64, 64);
        let n = 10_000;
        let mut bins = [0usize; 8];
        let mut d_min = f64::MAX;
        let mut d_max = f64::MIN;
        let mut e_min = f64::MAX;
        let mut e_max = f64::MIN;
        for _ in 0..n {
            let cam =
                sample_hemisphere_camera(&mut rng, Vec3::ZERO, 0.8, 1.4, 0.5, 1.4, k).unwrap();
            let eye = cam.extrinsic.inverse().translation;
            let d = eye.norm();
            let elev = (eye.z / d).asin();
            let azim = eye.y.atan2(eye.x).rem_euclid(std::f64::consts::TAU);
            d_min = d_min.min(d);
            d_max = d_max.max(d);
            e_min = e_min.min(elev);
            e_max = e_max.max(elev);
            bins[(azim / std::f64::consts::TAU * 8.0) as usize % 8] += 1;
        }
        assert!(d_min >= 0.8 && d_max <= 1.4 + 1e-9);
        assert!(e_min >= 0.5 - 1e-9 && e_max <= 1.4 + 1e-9);
        let expect = n as f64 / 8.0;
        let sigma = (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
        for count in bins {
            assert!((count as f64 - expect).abs() < 5.0 * sigma, "bins {bins:?}");
        }
    }

    #[test]
    fn project_unproject_consistency() {
        let cam = test_camera(
            look_at(
                Vec3::new(0.9, -0.4, 1.1),
                Vec3::ZERO,
                Vec3::new(0.0, 0.0, 1.0),
            )
            .unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let w = Vec3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() * 0.3,
            );
            if let Some(p) = project(&cam, w) {
                let k = &cam.intrinsics;
                let cam_pt = Vec3::new(
                    p.depth * (p.u - k.cx) / k.fx,
                    p.depth * (p.v - k.cy) / k.fy,
                    p.depth,
                );
                let world = transform_point(&cam.extrinsic.inverse(), cam_pt);
                let back = project(&cam, world).unwrap();
                assert!((back.u - p.u).abs() < 1e-6 && (back.v - p.v).abs() < 1e-6);
            }
        }
    }
}
