//! Pinhole cameras: world-to-camera rigid transforms, center projection and
//! EWA covariance projection. Image x is right, y is down, z looks forward;
//! a point is in view when its depth exceeds `Z_NEAR` and its projection
//! falls inside [0, width) x [0, height).

use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Covariance3;

/// Near-plane depth below which a point is out of view.
pub const Z_NEAR: f64 = 0.01;

/// Isotropic low-pass term added to every projected 2D covariance.
pub const LOW_PASS: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
}

/// JSON wire format: intrinsics plus a 4x4 row-major world-to-camera matrix.
#[derive(Serialize, Deserialize)]
struct CameraRecord {
    id: u32,
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    w2c: Vec<f64>,
}

impl Camera {
    /// Camera position in world space.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Project a world point. Returns continuous pixel coordinates and depth,
    /// or `None` when the point is out of view.
    pub fn project_center(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let c = self.rotation * p + self.translation;
        if !(c.z > Z_NEAR) {
            return None;
        }
        let u = self.fx * c.x / c.z + self.cx;
        let v = self.fy * c.y / c.z + self.cy;
        if u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64 {
            Some((u, v, c.z))
        } else {
            None
        }
    }

    /// Perspective Jacobian of the pixel mapping at camera-space point `c`,
    /// composed with the world-to-camera rotation.
    fn projection_jacobian(&self, c: &Vector3<f64>) -> Matrix3x2<f64> {
        let (x, y, z) = (c.x, c.y, c.z);
        // Rows of J: du/d(x,y,z), dv/d(x,y,z).
        let j = nalgebra::Matrix2x3::new(
            self.fx / z,
            0.0,
            -self.fx * x / (z * z),
            0.0,
            self.fy / z,
            -self.fy * y / (z * z),
        );
        (j * self.rotation).transpose()
    }

    /// EWA projection of a world covariance to a 2D splat covariance:
    /// J W Sigma W^T J^T plus the 0.3 low-pass term. The result is symmetric
    /// positive definite with determinant >= 0.09.
    pub fn project_covariance(&self, mu: &Vector3<f64>, cov: &Covariance3) -> Result<Matrix2<f64>> {
        let c = self.rotation * mu + self.translation;
        let m = self.projection_jacobian(&c);
        let mut out = m.transpose() * cov.to_matrix() * m;
        out[(0, 0)] += LOW_PASS;
        out[(1, 1)] += LOW_PASS;
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!(
                "projected covariance is not finite (depth {})",
                c.z
            )));
        }
        Ok(out)
    }

    /// Camera at `eye` looking at `target` with the given world up vector.
    pub fn look_at(
        id: u32,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Camera> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Config("look_at: eye equals target".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-9)
            .ok_or_else(|| Error::Config("look_at: view direction parallel to up".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(Camera {
            id,
            width,
            height,
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation,
            translation: -(rotation * eye),
        })
    }

    fn from_record(r: &CameraRecord, source: &str) -> Result<Camera> {
        if r.w2c.len() != 16 {
            return Err(Error::Schema(format!(
                "{source}: camera {}: w2c has {} entries, expected 16",
                r.id,
                r.w2c.len()
            )));
        }
        if !(r.fx > 0.0 && r.fy > 0.0) || r.width == 0 || r.height == 0 {
            return Err(Error::Config(format!(
                "{source}: camera {}: non-positive focal length or empty image",
                r.id
            )));
        }
        let m = &r.w2c;
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        let bottom_ok = (m[12] == 0.0 || m[12].abs() < 1e-9)
            && m[13].abs() < 1e-9
            && m[14].abs() < 1e-9
            && (m[15] - 1.0).abs() < 1e-9;
        if !bottom_ok {
            return Err(Error::Config(format!(
                "{source}: camera {}: w2c bottom row is not [0, 0, 0, 1]",
                r.id
            )));
        }
        let gram = rotation.transpose() * rotation;
        let drift = (gram - Matrix3::identity()).abs().max();
        if drift > 1e-6 || rotation.determinant() < 0.0 {
            return Err(Error::Config(format!(
                "{source}: camera {}: rotation block is not orthonormal (drift {drift:.2e})",
                r.id
            )));
        }
        Ok(Camera {
            id: r.id,
            width: r.width,
            height: r.height,
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            rotation,
            translation,
        })
    }

    fn to_record(&self) -> CameraRecord {
        let r = &self.rotation;
        let t = &self.translation;
        CameraRecord {
            id: self.id,
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            w2c: vec![
                r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x, //
                r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y, //
                r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z, //
                0.0, 0.0, 0.0, 1.0,
            ],
        }
    }
}

/// Load and validate a camera array from JSON.
pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: cannot read: {e}", path.display())))?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let source = path.display().to_string();
    let cameras: Vec<Camera> = records
        .iter()
        .map(|r| Camera::from_record(r, &source))
        .collect::<Result<_>>()?;
    let mut ids: Vec<u32> = cameras.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != cameras.len() {
        return Err(Error::Config(format!("{source}: duplicate camera ids")));
    }
    Ok(cameras)
}

/// Write a camera array as JSON.
pub fn save_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    let records: Vec<CameraRecord> = cameras.iter().map(Camera::to_record).collect();
    let text = serde_json::to_string_pretty(&records)
        .map_err(|e| Error::Write(format!("{}: {e}", path.display())))?;
    std::fs::write(path, text).map_err(|e| Error::Write(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::covariance;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix4, UnitQuaternion, Vector4};
    use rand::SeedableRng;
    use rand::RngExt;
    use rand_chacha::ChaCha8Rng;

    fn axis_camera() -> Camera {
        Camera {
            id: 0,
            width: 100,
            height: 100,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    fn random_camera(rng: &mut ChaCha8Rng, id: u32) -> Camera {
        let q = UnitQuaternion::from_euler_angles(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        Camera {
            id,
            width: 640,
            height: 480,
            fx: rng.random_range(200.0..800.0),
            fy: rng.random_range(200.0..800.0),
            cx: rng.random_range(300.0..340.0),
            cy: rng.random_range(220.0..260.0),
            rotation: *q.to_rotation_matrix().matrix(),
            translation: Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
        }
    }

    #[test]
    fn unit_depth_point_hits_principal_point() {
        let cam = axis_camera();
        let (u, v, z) = cam.project_center(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((u, v, z), (50.0, 50.0, 1.0));
    }

    #[test]
    fn point_behind_camera_is_out_of_view() {
        let cam = axis_camera();
        assert!(cam.project_center(&Vector3::new(0.0, 0.0, -1.0)).is_none());
        assert!(cam.project_center(&Vector3::new(0.0, 0.0, 0.009)).is_none());
    }

    #[test]
    fn point_outside_image_is_out_of_view() {
        let cam = axis_camera();
        // u = 100 * 0.51 + 50 = 101 >= width.
        assert!(cam.project_center(&Vector3::new(0.51, 0.0, 1.0)).is_none());
        // u = -0.0001 is just below 0.
        assert!(cam.project_center(&Vector3::new(-0.500001, 0.0, 1.0)).is_none());
    }

    #[test]
    fn projection_matches_homogeneous_matrix_oracle() {
        // Oracle: build the full 3x4 projective matrix and divide homogeneous
        // coordinates, entirely through nalgebra 4x4 arithmetic.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 100 {
            let cam = random_camera(&mut rng, 0);
            let c_cam = Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(0.5..5.0),
            );
            let mu = cam.rotation.transpose() * (c_cam - cam.translation);
            let Some((u, v, z)) = cam.project_center(&mu) else { continue };

            let mut w2c = Matrix4::identity();
            w2c.fixed_view_mut::<3, 3>(0, 0).copy_from(&cam.rotation);
            w2c.fixed_view_mut::<3, 1>(0, 3).copy_from(&cam.translation);
            let k = Matrix4::new(
                cam.fx, 0.0, cam.cx, 0.0, //
                0.0, cam.fy, cam.cy, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            );
            let h = k * w2c * Vector4::new(mu.x, mu.y, mu.z, 1.0);
            assert_abs_diff_eq!(u, h.x / h.z, epsilon = 1e-9);
            assert_abs_diff_eq!(v, h.y / h.z, epsilon = 1e-9);
            assert_abs_diff_eq!(z, h.z, epsilon = 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn depth_scaling_leaves_pixel_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let cam = random_camera(&mut rng, 0);
            let c_cam = Vector3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.5..3.0),
            );
            let mu1 = cam.rotation.transpose() * (c_cam - cam.translation);
            let mu2 = cam.rotation.transpose() * (2.0 * c_cam - cam.translation);
            if let (Some((u1, v1, _)), Some((u2, v2, _))) =
                (cam.project_center(&mu1), cam.project_center(&mu2))
            {
                assert_abs_diff_eq!(u1, u2, epsilon = 1e-9);
                assert_abs_diff_eq!(v1, v2, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn isotropic_axis_covariance_projects_to_low_passed_identity() {
        let mut cam = axis_camera();
        cam.fx = 1.0;
        cam.fy = 1.0;
        let cov = covariance(Vector3::new(1.0, 1.0, 1.0), [1.0, 0.0, 0.0, 0.0]).unwrap();
        let out = cam.project_covariance(&Vector3::new(0.0, 0.0, 1.0), &cov).unwrap();
        assert_abs_diff_eq!(out, Matrix2::new(1.3, 0.0, 0.0, 1.3), epsilon = 1e-12);
    }

    #[test]
    fn projected_covariance_is_linear_before_low_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cam = random_camera(&mut rng, 0);
        let mu = cam.rotation.transpose()
            * (Vector3::new(0.1, -0.05, 2.0) - cam.translation);
        let s = Vector3::new(0.3, 0.2, 0.5);
        let q = [0.9f64, 0.1, 0.3, 0.2];
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let q = [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm];
        let base = covariance(s, q).unwrap();
        let scaled = covariance(s * 1.7, q).unwrap();
        let low = Matrix2::new(LOW_PASS, 0.0, 0.0, LOW_PASS);
        let a = cam.project_covariance(&mu, &base).unwrap() - low;
        let b = cam.project_covariance(&mu, &scaled).unwrap() - low;
        assert_abs_diff_eq!(b, a * (1.7f64 * 1.7), epsilon = 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let cam = random_camera(&mut rng, 0);
            let c_cam = Vector3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(1.0..4.0),
            );
            let mu = cam.rotation.transpose() * (c_cam - cam.translation);
            if cam.project_center(&mu).is_none() {
                continue;
            }
            let analytic = cam.projection_jacobian(&(cam.rotation * mu + cam.translation));
            let h = 1e-6;
            for k in 0..3 {
                let mut lo = mu;
                let mut hi = mu;
                lo[k] -= h;
                hi[k] += h;
                let pl = cam.rotation * lo + cam.translation;
                let ph = cam.rotation * hi + cam.translation;
                let ul = cam.fx * pl.x / pl.z + cam.cx;
                let uh = cam.fx * ph.x / ph.z + cam.cx;
                let vl = cam.fy * pl.y / pl.z + cam.cy;
                let vh = cam.fy * ph.y / ph.z + cam.cy;
                assert_abs_diff_eq!(analytic[(k, 0)], (uh - ul) / (2.0 * h), epsilon = 1e-5 * analytic[(k, 0)].abs().max(1.0));
                assert_abs_diff_eq!(analytic[(k, 1)], (vh - vl) / (2.0 * h), epsilon = 1e-5 * analytic[(k, 1)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn projected_determinant_has_low_pass_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let cam = random_camera(&mut rng, 0);
            let mu = cam.rotation.transpose()
                * (Vector3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(0.2..6.0),
                ) - cam.translation);
            let s = Vector3::new(
                rng.random_range(0.01..0.8),
                rng.random_range(0.01..0.8),
                rng.random_range(0.01..0.8),
            );
            let cov = covariance(s, [1.0, 0.0, 0.0, 0.0]).unwrap();
            let out = cam.project_covariance(&mu, &cov).unwrap();
            assert!(out.determinant() >= 0.09 - 1e-12);
        }
    }

    #[test]
    fn look_at_points_camera_at_target() {
        let eye = Vector3::new(4.0, -3.0, 2.0);
        let cam = Camera::look_at(0, 128, 128, 150.0, 150.0, eye, Vector3::zeros(), Vector3::z())
            .unwrap();
        let (u, v, z) = cam.project_center(&Vector3::zeros()).unwrap();
        assert_abs_diff_eq!(u, 64.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 64.0, epsilon = 1e-9);
        assert_abs_diff_eq!(z, eye.norm(), epsilon = 1e-9);
        let gram = cam.rotation.transpose() * cam.rotation;
        assert_abs_diff_eq!(gram, Matrix3::identity(), epsilon = 1e-12);
        assert!(cam.rotation.determinant() > 0.0);
    }

    #[test]
    fn cameras_json_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cams: Vec<Camera> = (0..4).map(|i| random_camera(&mut rng, i)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.json");
        save_cameras(&path, &cams).unwrap();
        let back = load_cameras(&path).unwrap();
        assert_eq!(cams.len(), back.len());
        for (a, b) in cams.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_abs_diff_eq!(a.rotation, b.rotation, epsilon = 0.0);
            assert_abs_diff_eq!(a.translation, b.translation, epsilon = 0.0);
        }
    }

    #[test]
    fn bad_camera_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.json");

        assert!(matches!(load_cameras(&path), Err(Error::Parse(_))));

        std::fs::write(&path, "[{\"id\":0}]").unwrap();
        assert!(matches!(load_cameras(&path), Err(Error::Parse(_))));

        // Rotation block that is not orthonormal.
        let bad = "[{\"id\":0,\"width\":10,\"height\":10,\"fx\":10,\"fy\":10,\"cx\":5,\"cy\":5,\
                   \"w2c\":[2,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]";
        std::fs::write(&path, bad).unwrap();
        assert!(matches!(load_cameras(&path), Err(Error::Config(_))));

        // Duplicate ids.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cams = vec![random_camera(&mut rng, 3), random_camera(&mut rng, 3)];
        save_cameras(&path, &cams).unwrap();
        assert!(matches!(load_cameras(&path), Err(Error::Config(_))));
    }
}
