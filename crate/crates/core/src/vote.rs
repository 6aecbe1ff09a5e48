//! Multi-view vote casting and the consensus initialization of the
//! per-Gaussian tampering attribute.
//!
//! Each Gaussian votes once per view: abstain when its center does not
//! project into the image, otherwise tamper or authentic according to the
//! mask pixel under the projected center. The initial attribute is the raw
//! tamper count where strict majority holds and zero elsewhere, min-max
//! normalized over the scene.

use std::path::Path;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::exec;
use crate::image_io;
use crate::scene::GaussianScene;

/// Mask pixels at or above this 8-bit value are tampered.
pub const MASK_THRESHOLD: u8 = 128;

/// A binary tamper mask tied to one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperMask {
    pub view_id: u32,
    pub width: u32,
    pub height: u32,
    /// Row-major, true = tampered.
    pub labels: Vec<bool>,
}

impl TamperMask {
    pub fn label(&self, x: u32, y: u32) -> bool {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image_io::write_mask_png(path, self.width, self.height, &self.labels)
    }
}

/// Load one mask image and bind it to a view id.
pub fn load_mask(path: &Path, view_id: u32) -> Result<TamperMask> {
    let (width, height, bytes) = image_io::load_gray(path)?;
    let labels = bytes.iter().map(|&b| b >= MASK_THRESHOLD).collect();
    Ok(TamperMask { view_id, width, height, labels })
}

/// Load `mask_<view id>.png` (or `.pgm`) for every camera from a directory.
///
/// Missing files are parse errors naming the expected path; masks whose
/// dimensions disagree with the camera are shape errors.
pub fn load_masks(dir: &Path, cameras: &[Camera]) -> Result<Vec<TamperMask>> {
    cameras
        .iter()
        .map(|cam| {
            let png = dir.join(format!("mask_{}.png", cam.id));
            let pgm = dir.join(format!("mask_{}.pgm", cam.id));
            let path = if png.exists() {
                png
            } else if pgm.exists() {
                pgm
            } else {
                return Err(Error::Parse(format!("missing mask file {}", png.display())));
            };
            let mask = load_mask(&path, cam.id)?;
            if mask.width != cam.width || mask.height != cam.height {
                return Err(Error::Shape(format!(
                    "mask {} is {}x{}, camera {} expects {}x{}",
                    path.display(),
                    mask.width,
                    mask.height,
                    cam.id,
                    cam.width,
                    cam.height
                )));
            }
            Ok(mask)
        })
        .collect()
}

/// Per-Gaussian vote counters over all views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTally {
    pub n_tamper: Vec<u32>,
    pub n_authentic: Vec<u32>,
    pub n_abstain: Vec<u32>,
}

impl VoteTally {
    /// Strict-majority consensus: tamper beats both authentic and abstain.
    pub fn consensus(&self, i: usize) -> bool {
        self.n_tamper[i] > self.n_authentic[i] && self.n_tamper[i] > self.n_abstain[i]
    }
}

/// Cast one vote per Gaussian per view.
///
/// Masks are paired with cameras positionally and must carry matching view
/// ids; a Gaussian abstains in a view when its center fails the visibility
/// test, and otherwise reads the mask at the floor of its projected center.
pub fn cast_votes(
    scene: &GaussianScene,
    cameras: &[Camera],
    masks: &[TamperMask],
) -> Result<VoteTally> {
    if cameras.len() != masks.len() {
        return Err(Error::Config(format!(
            "{} cameras but {} masks",
            cameras.len(),
            masks.len()
        )));
    }
    for (cam, mask) in cameras.iter().zip(masks) {
        if cam.id != mask.view_id {
            return Err(Error::Config(format!(
                "mask for view {} paired with camera {}",
                mask.view_id, cam.id
            )));
        }
        if mask.width != cam.width || mask.height != cam.height {
            return Err(Error::Shape(format!(
                "mask for view {} is {}x{}, camera expects {}x{}",
                mask.view_id, mask.width, mask.height, cam.width, cam.height
            )));
        }
    }
    let n = scene.count();
    let votes: Vec<(u32, u32, u32)> = exec::map_indexed(n, |i| {
        let mut tally = (0u32, 0u32, 0u32);
        for (cam, mask) in cameras.iter().zip(masks) {
            match cam.project_center(&scene.positions[i]) {
                Some((u, v, _)) => {
                    if mask.label(u.floor() as u32, v.floor() as u32) {
                        tally.0 += 1;
                    } else {
                        tally.1 += 1;
                    }
                }
                None => tally.2 += 1,
            }
        }
        tally
    });
    Ok(VoteTally {
        n_tamper: votes.iter().map(|t| t.0).collect(),
        n_authentic: votes.iter().map(|t| t.1).collect(),
        n_abstain: votes.iter().map(|t| t.2).collect(),
    })
}

/// Initialize the tampering attribute from a vote tally.
///
/// Raw value is the tamper count where strict-majority consensus holds and
/// zero elsewhere; the raw vector is then min-max normalized in place.
pub fn consensus_init(scene: &mut GaussianScene, tally: &VoteTally) -> Result<()> {
    let n = scene.count();
    if tally.n_tamper.len() != n {
        return Err(Error::Shape(format!(
            "tally covers {} gaussians, scene has {n}",
            tally.n_tamper.len()
        )));
    }
    for i in 0..n {
        scene.tamper[i] = if tally.consensus(i) { tally.n_tamper[i] as f64 } else { 0.0 };
    }
    scene.normalize_tamper();
    Ok(())
}

/// Votes then initialization in one step.
pub fn init_from_masks(
    scene: &mut GaussianScene,
    cameras: &[Camera],
    masks: &[TamperMask],
) -> Result<()> {
    let tally = cast_votes(scene, cameras, masks)?;
    consensus_init(scene, &tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_scene;
    use nalgebra::Vector3;
    use rand::prelude::*;
    use rand::RngExt;
    use rand_chacha::ChaCha8Rng;

    fn camera_at_origin(id: u32) -> Camera {
        Camera::look_at(
            id,
            64,
            64,
            100.0,
            100.0,
            Vector3::new(0.0, 0.0, -5.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap()
    }

    fn uniform_mask(view_id: u32, width: u32, height: u32, tampered: bool) -> TamperMask {
        TamperMask { view_id, width, height, labels: vec![tampered; (width * height) as usize] }
    }

    fn front_scene(n: usize) -> GaussianScene {
        let mut scene = random_scene(3, n, 0);
        for p in &mut scene.positions {
            // Keep every center well inside the 64x64 frustum of camera_at_origin.
            *p = Vector3::new(p.x * 0.2, p.y * 0.2, p.z * 0.2);
        }
        scene
    }

    #[test]
    fn unanimous_masks_give_unanimous_votes() {
        let scene = front_scene(40);
        let cams = vec![camera_at_origin(0), camera_at_origin(1), camera_at_origin(2)];
        let masks = vec![
            uniform_mask(0, 64, 64, true),
            uniform_mask(1, 64, 64, true),
            uniform_mask(2, 64, 64, false),
        ];
        let tally = cast_votes(&scene, &cams, &masks).unwrap();
        for i in 0..scene.count() {
            assert_eq!(tally.n_tamper[i], 2);
            assert_eq!(tally.n_authentic[i], 1);
            assert_eq!(tally.n_abstain[i], 0);
        }
    }

    #[test]
    fn mask_threshold_is_128() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask_0.png");
        image::save_buffer(&path, &[127u8, 128u8], 2, 1, image::ColorType::L8).unwrap();
        let mask = load_mask(&path, 0).unwrap();
        assert_eq!(mask.labels, vec![false, true]);
    }

    #[test]
    fn gaussians_behind_every_camera_abstain_everywhere() {
        let mut scene = front_scene(10);
        for p in &mut scene.positions {
            p.z = -20.0;
        }
        let cams = vec![camera_at_origin(0), camera_at_origin(1)];
        let masks = vec![uniform_mask(0, 64, 64, true), uniform_mask(1, 64, 64, true)];
        let tally = cast_votes(&scene, &cams, &masks).unwrap();
        for i in 0..scene.count() {
            assert_eq!(tally.n_abstain[i], 2);
            assert!(!tally.consensus(i));
        }
    }

    #[test]
    fn votes_conserve_view_count() {
        let scene = random_scene(9, 120, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cams: Vec<Camera> = (0..8)
            .map(|id| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                Camera::look_at(
                    id,
                    48,
                    40,
                    70.0,
                    70.0,
                    Vector3::new(6.0 * a.cos(), 6.0 * a.sin(), rng.random_range(-2.0..2.0)),
                    Vector3::zeros(),
                    Vector3::new(0.0, 0.0, 1.0),
                )
                .unwrap()
            })
            .collect();
        let masks: Vec<TamperMask> = cams
            .iter()
            .map(|c| TamperMask {
                view_id: c.id,
                width: c.width,
                height: c.height,
                labels: (0..c.width * c.height).map(|_| rng.random_bool(0.4)).collect(),
            })
            .collect();
        let tally = cast_votes(&scene, &cams, &masks).unwrap();
        for i in 0..scene.count() {
            assert_eq!(tally.n_tamper[i] + tally.n_authentic[i] + tally.n_abstain[i], 8);
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let scene = random_scene(17, 200, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cams: Vec<Camera> = (0..8)
            .map(|id| {
                let a = std::f64::consts::TAU * id as f64 / 8.0;
                Camera::look_at(
                    id,
                    56,
                    44,
                    60.0,
                    64.0,
                    Vector3::new(5.0 * a.cos(), 5.0 * a.sin(), 2.0),
                    Vector3::zeros(),
                    Vector3::new(0.0, 0.0, 1.0),
                )
                .unwrap()
            })
            .collect();
        let masks: Vec<TamperMask> = cams
            .iter()
            .map(|c| TamperMask {
                view_id: c.id,
                width: c.width,
                height: c.height,
                labels: (0..c.width * c.height).map(|_| rng.random_bool(0.5)).collect(),
            })
            .collect();

        let tally = cast_votes(&scene, &cams, &masks).unwrap();
        for i in 0..scene.count() {
            let (mut t, mut a, mut ab) = (0u32, 0u32, 0u32);
            for (cam, mask) in cams.iter().zip(&masks) {
                match cam.project_center(&scene.positions[i]) {
                    Some((u, v, _)) => {
                        let x = u.floor() as u32;
                        let y = v.floor() as u32;
                        if mask.labels[(y * mask.width + x) as usize] {
                            t += 1;
                        } else {
                            a += 1;
                        }
                    }
                    None => ab += 1,
                }
            }
            assert_eq!((tally.n_tamper[i], tally.n_authentic[i], tally.n_abstain[i]), (t, a, ab));
        }
    }

    #[test]
    fn votes_are_invariant_to_view_order() {
        let scene = random_scene(23, 80, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cams: Vec<Camera> = (0..5)
            .map(|id| {
                let a = std::f64::consts::TAU * id as f64 / 5.0;
                Camera::look_at(
                    id,
                    32,
                    32,
                    40.0,
                    40.0,
                    Vector3::new(4.0 * a.cos(), 4.0 * a.sin(), 1.5),
                    Vector3::zeros(),
                    Vector3::new(0.0, 0.0, 1.0),
                )
                .unwrap()
            })
            .collect();
        let masks: Vec<TamperMask> = cams
            .iter()
            .map(|c| TamperMask {
                view_id: c.id,
                width: c.width,
                height: c.height,
                labels: (0..c.width * c.height).map(|_| rng.random_bool(0.3)).collect(),
            })
            .collect();
        let tally = cast_votes(&scene, &cams, &masks).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let cams_p: Vec<Camera> = perm.iter().map(|&j| cams[j].clone()).collect();
        let masks_p: Vec<TamperMask> = perm.iter().map(|&j| masks[j].clone()).collect();
        let tally_p = cast_votes(&scene, &cams_p, &masks_p).unwrap();
        assert_eq!(tally, tally_p);
    }

    #[test]
    fn consensus_requires_strict_majority_over_both() {
        let tally = VoteTally {
            n_tamper: vec![5, 3, 3],
            n_authentic: vec![2, 3, 1],
            n_abstain: vec![1, 2, 4],
        };
        assert!(tally.consensus(0));
        assert!(!tally.consensus(1)); // ties with authentic lose
        assert!(!tally.consensus(2)); // ties/losses against abstain lose

        let mut scene = random_scene(1, 3, 0);
        consensus_init(&mut scene, &tally).unwrap();
        // Raw values [5, 0, 0] normalize to [1, 0, 0].
        assert_eq!(scene.tamper, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn raw_values_are_tamper_counts_before_normalization() {
        let tally = VoteTally {
            n_tamper: vec![2, 6, 4, 0],
            n_authentic: vec![1, 1, 1, 5],
            n_abstain: vec![1, 1, 1, 3],
        };
        let mut scene = random_scene(2, 4, 0);
        consensus_init(&mut scene, &tally).unwrap();
        // Raw [2, 6, 4, 0] -> min 0, max 6.
        let expect = [2.0 / 6.0, 1.0, 4.0 / 6.0, 0.0];
        for (got, want) in scene.tamper.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn all_authentic_masks_initialize_to_zero() {
        let mut scene = front_scene(30);
        let cams = vec![camera_at_origin(0), camera_at_origin(1), camera_at_origin(2)];
        let masks: Vec<TamperMask> =
            cams.iter().map(|c| uniform_mask(c.id, c.width, c.height, false)).collect();
        init_from_masks(&mut scene, &cams, &masks).unwrap();
        assert!(scene.tamper.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn pairing_and_shape_errors() {
        let scene = front_scene(4);
        let cams = vec![camera_at_origin(0), camera_at_origin(1)];
        let short = vec![uniform_mask(0, 64, 64, true)];
        assert!(matches!(cast_votes(&scene, &cams, &short), Err(Error::Config(_))));

        let mislabeled = vec![uniform_mask(0, 64, 64, true), uniform_mask(7, 64, 64, true)];
        assert!(matches!(cast_votes(&scene, &cams, &mislabeled), Err(Error::Config(_))));

        let wrong_size = vec![uniform_mask(0, 64, 64, true), uniform_mask(1, 32, 64, true)];
        assert!(matches!(cast_votes(&scene, &cams, &wrong_size), Err(Error::Shape(_))));

        let tally = VoteTally {
            n_tamper: vec![0; 3],
            n_authentic: vec![0; 3],
            n_abstain: vec![0; 3],
        };
        let mut scene4 = front_scene(4);
        assert!(matches!(consensus_init(&mut scene4, &tally), Err(Error::Shape(_))));
    }

    #[test]
    fn load_masks_reads_by_camera_id_and_validates_dims() {
        let dir = tempfile::tempdir().unwrap();
        let cams = vec![camera_at_origin(2), camera_at_origin(5)];
        let m2 = uniform_mask(2, 64, 64, true);
        m2.save_png(&dir.path().join("mask_2.png")).unwrap();
        let m5 = uniform_mask(5, 64, 64, false);
        m5.save_png(&dir.path().join("mask_5.png")).unwrap();

        let masks = load_masks(dir.path(), &cams).unwrap();
        assert_eq!(masks.len(), 2);
        assert_eq!(masks[0], m2);
        assert_eq!(masks[1], m5);

        let missing = vec![camera_at_origin(9)];
        let err = load_masks(dir.path(), &missing).unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("mask_9.png")),
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad = uniform_mask(5, 16, 16, false);
        bad.save_png(&dir.path().join("mask_5.png")).unwrap();
        assert!(matches!(load_masks(dir.path(), &cams), Err(Error::Shape(_))));
    }
}
