//! Seeded synthetic scenes, camera rigs, ground-truth masks, and the
//! distortion harness used for robustness studies.
//!
//! Scenes are clustered point clouds; exactly round(count * tamper_fraction)
//! Gaussians form one anomalous cluster whose construction depends on the
//! tamper kind. Every drawn value passes through f32 so saved models reload
//! bit-exactly.

use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::prelude::*;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{self, Camera};
use crate::error::{Error, Result};
use crate::eval;
use crate::ply;
use crate::render::{PreparedView, SH_C0};
use crate::scene::{logit, GaussianScene};
use crate::vote::TamperMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TamperKind {
    /// A foreign cluster inserted into a free region.
    Incorporate,
    /// An existing cluster with edited color, scale, and position.
    Modify,
    /// An existing cluster replaced by mismatched fill splats.
    RemoveAndFill,
}

impl FromStr for TamperKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incorporate" => Ok(TamperKind::Incorporate),
            "modify" => Ok(TamperKind::Modify),
            "remove-and-fill" => Ok(TamperKind::RemoveAndFill),
            other => Err(Error::Config(format!("unknown tamper kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub count: usize,
    pub clusters: usize,
    pub layout_radius: f64,
    /// Standard deviation of member positions around their cluster center.
    pub spread: f64,
    pub tamper_fraction: f64,
    pub kind: TamperKind,
    pub color_shift: f64,
    pub scale_factor: f64,
    pub position_jitter: f64,
    pub views: usize,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub camera_radius: f64,
    pub camera_elevation_deg: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            count: 5000,
            clusters: 6,
            layout_radius: 2.0,
            spread: 0.35,
            tamper_fraction: 0.1,
            kind: TamperKind::Modify,
            color_shift: 0.25,
            scale_factor: 1.6,
            position_jitter: 0.02,
            views: 8,
            width: 128,
            height: 128,
            focal: 160.0,
            camera_radius: 6.0,
            camera_elevation_deg: 25.0,
        }
    }
}

impl SynthSpec {
    pub fn tampered_count(&self) -> usize {
        (self.count as f64 * self.tamper_fraction).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be positive".into()));
        }
        if self.clusters < 2 {
            return Err(Error::Config("need at least two clusters".into()));
        }
        if !(self.tamper_fraction > 0.0 && self.tamper_fraction < 1.0) {
            return Err(Error::Config(format!(
                "tamper_fraction must lie in (0, 1), got {}",
                self.tamper_fraction
            )));
        }
        let m = self.tampered_count();
        if m == 0 || m >= self.count {
            return Err(Error::Config(format!(
                "tamper_fraction {} of {} gaussians rounds to {m}",
                self.tamper_fraction, self.count
            )));
        }
        if self.views == 0 {
            return Err(Error::Config("need at least one view".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        for (name, v) in [
            ("layout_radius", self.layout_radius),
            ("spread", self.spread),
            ("focal", self.focal),
            ("camera_radius", self.camera_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.camera_elevation_deg.abs() >= 80.0 {
            return Err(Error::Config("camera elevation must stay below 80 degrees".into()));
        }
        Ok(())
    }
}

/// Round through f32 so the value survives a PLY round trip unchanged.
fn f32r(v: f64) -> f64 {
    v as f32 as f64
}

struct Draw<'a> {
    rng: &'a mut ChaCha8Rng,
}

impl Draw<'_> {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        f32r(self.rng.random_range(lo..hi))
    }

    fn normal(&mut self, sd: f64) -> f64 {
        f32r(Normal::new(0.0, sd).unwrap().sample(self.rng))
    }

    fn unit_quat(&mut self) -> [f64; 4] {
        loop {
            let q: Vec<f64> =
                (0..4).map(|_| Normal::new(0.0, 1.0).unwrap().sample(self.rng)).collect();
            let n = (q.iter().map(|x| x * x).sum::<f64>()).sqrt();
            if n > 1e-3 {
                return [f32r(q[0] / n), f32r(q[1] / n), f32r(q[2] / n), f32r(q[3] / n)];
            }
        }
    }

    fn color(&mut self, base: &[f64; 3], jitter: f64) -> [f64; 3] {
        [
            f32r((base[0] + self.rng.random_range(-jitter..jitter)).clamp(0.02, 0.98)),
            f32r((base[1] + self.rng.random_range(-jitter..jitter)).clamp(0.02, 0.98)),
            f32r((base[2] + self.rng.random_range(-jitter..jitter)).clamp(0.02, 0.98)),
        ]
    }
}

fn push_member(
    scene: &mut GaussianScene,
    center: &Vector3<f64>,
    spread: f64,
    scale_lo: f64,
    scale_hi: f64,
    opacity_lo: f64,
    opacity_hi: f64,
    base_color: &[f64; 3],
    d: &mut Draw,
) {
    scene.positions.push(Vector3::new(
        f32r(center.x + d.normal(spread)),
        f32r(center.y + d.normal(spread)),
        f32r(center.z + d.normal(spread)),
    ));
    scene.rotations.push(d.unit_quat());
    scene.log_scales.push(Vector3::new(
        f32r(d.uniform(scale_lo, scale_hi).ln()),
        f32r(d.uniform(scale_lo, scale_hi).ln()),
        f32r(d.uniform(scale_lo, scale_hi).ln()),
    ));
    scene.raw_opacities.push(f32r(logit(d.uniform(opacity_lo, opacity_hi))));
    let c = d.color(base_color, 0.05);
    for ch in 0..3 {
        scene.sh.push(f32r((c[ch] - 0.5) / SH_C0));
    }
    scene.tamper.push(0.0);
}

fn cluster_sizes(total: usize, clusters: usize, first: usize) -> Vec<usize> {
    let rest = total - first;
    let others = clusters - 1;
    let base = rest / others;
    let extra = rest % others;
    let mut sizes = vec![first];
    for k in 0..others {
        sizes.push(base + usize::from(k < extra));
    }
    sizes
}

/// Build a tampered scene. Returns the scene (attribute all zero) and the
/// per-Gaussian ground-truth labels; exactly `tampered_count()` are true.
pub fn generate_scene(spec: &SynthSpec) -> Result<(GaussianScene, Vec<bool>)> {
    generate(spec, true)
}

/// Build the matching authentic scene: the same layout with no tampering.
pub fn generate_authentic(spec: &SynthSpec) -> Result<(GaussianScene, Vec<bool>)> {
    generate(spec, false)
}

fn generate(spec: &SynthSpec, tampered: bool) -> Result<(GaussianScene, Vec<bool>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = &mut Draw { rng: &mut rng };
    let m = spec.tampered_count();
    let k = spec.clusters;

    let centers: Vec<Vector3<f64>> = (0..k)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / k as f64 + d.uniform(-0.15, 0.15);
            let radius = spec.layout_radius * d.uniform(0.8, 1.0);
            Vector3::new(
                f32r(radius * angle.cos()),
                f32r(radius * angle.sin()),
                d.uniform(-0.2, 0.2),
            )
        })
        .collect();
    let base_colors: Vec<[f64; 3]> = (0..k)
        .map(|_| [d.uniform(0.15, 0.85), d.uniform(0.15, 0.85), d.uniform(0.15, 0.85)])
        .collect();

    let mut scene = GaussianScene::empty(0);
    let incorporate = tampered && spec.kind == TamperKind::Incorporate;
    let sizes = cluster_sizes(spec.count, k, m);
    for c in 0..k {
        // For incorporation the anomalous cluster is appended later, leaving
        // its slot in the layout empty.
        if c == 0 && incorporate {
            continue;
        }
        for _ in 0..sizes[c] {
            push_member(
                &mut scene,
                &centers[c],
                spec.spread,
                0.02,
                0.06,
                0.55,
                0.92,
                &base_colors[c],
                d,
            );
        }
    }

    let mut labels = vec![false; spec.count];
    if tampered {
        match spec.kind {
            TamperKind::Incorporate => {
                let mean = mean_color(&scene);
                let foreign =
                    [f32r(1.0 - mean[0]), f32r(1.0 - mean[1]), f32r(1.0 - mean[2])];
                let start = scene.count();
                for _ in 0..m {
                    push_member(
                        &mut scene,
                        &centers[0],
                        spec.spread,
                        0.015,
                        0.035,
                        0.88,
                        0.97,
                        &foreign,
                        d,
                    );
                }
                for l in labels.iter_mut().skip(start) {
                    *l = true;
                }
            }
            TamperKind::Modify => {
                let channel = d.rng.random_range(0..3usize);
                for i in 0..m {
                    labels[i] = true;
                    for ch in 0..3 {
                        let shift = if ch == channel {
                            spec.color_shift
                        } else {
                            -spec.color_shift / 2.0
                        };
                        let c = (scene.sh[i * 3 + ch] * SH_C0 + 0.5 + shift).clamp(0.02, 0.98);
                        scene.sh[i * 3 + ch] = f32r((c - 0.5) / SH_C0);
                    }
                    scene.log_scales[i] = scene
                        .log_scales[i]
                        .map(|s| f32r(s + spec.scale_factor.ln()));
                    scene.positions[i] = Vector3::new(
                        f32r(scene.positions[i].x + d.normal(spec.position_jitter)),
                        f32r(scene.positions[i].y + d.normal(spec.position_jitter)),
                        f32r(scene.positions[i].z + d.normal(spec.position_jitter)),
                    );
                }
            }
            TamperKind::RemoveAndFill => {
                let others: Vec<usize> = (m..spec.count).collect();
                let mut fill = [0.0; 3];
                for ch in 0..3 {
                    let sum: f64 =
                        others.iter().map(|&i| scene.sh[i * 3 + ch] * SH_C0 + 0.5).sum();
                    fill[ch] = f32r(sum / others.len() as f64);
                }
                for i in 0..m {
                    labels[i] = true;
                    scene.positions[i] = Vector3::new(
                        f32r(centers[0].x + d.normal(spec.spread * 1.05)),
                        f32r(centers[0].y + d.normal(spec.spread * 1.05)),
                        f32r(centers[0].z + d.normal(spec.spread * 1.05)),
                    );
                    // Flat plate-like fill splats.
                    scene.log_scales[i] = Vector3::new(
                        f32r(d.uniform(0.05, 0.1).ln()),
                        f32r(d.uniform(0.05, 0.1).ln()),
                        f32r(d.uniform(0.008, 0.015).ln()),
                    );
                    let tilt = [
                        1.0,
                        d.uniform(-0.1, 0.1),
                        d.uniform(-0.1, 0.1),
                        d.uniform(-0.1, 0.1),
                    ];
                    let n = tilt.iter().map(|x| x * x).sum::<f64>().sqrt();
                    scene.rotations[i] =
                        [f32r(tilt[0] / n), f32r(tilt[1] / n), f32r(tilt[2] / n), f32r(tilt[3] / n)];
                    scene.raw_opacities[i] = f32r(logit(d.uniform(0.45, 0.7)));
                    let c = d.color(&fill, 0.04);
                    for ch in 0..3 {
                        scene.sh[i * 3 + ch] = f32r((c[ch] - 0.5) / SH_C0);
                    }
                }
            }
        }
    }
    debug_assert_eq!(scene.count(), spec.count);
    scene.validate()?;
    Ok((scene, labels))
}

fn mean_color(scene: &GaussianScene) -> [f64; 3] {
    let n = scene.count().max(1) as f64;
    let mut mean = [0.0; 3];
    for i in 0..scene.count() {
        for ch in 0..3 {
            mean[ch] += scene.sh[i * 3 + ch] * SH_C0 + 0.5;
        }
    }
    mean.map(|v| v / n)
}

/// Evenly spaced ring of cameras at fixed elevation, all looking at the
/// layout origin with +z up.
pub fn ring_cameras(spec: &SynthSpec) -> Result<Vec<Camera>> {
    spec.validate()?;
    let height = spec.camera_radius * spec.camera_elevation_deg.to_radians().tan();
    (0..spec.views)
        .map(|v| {
            let angle = std::f64::consts::TAU * v as f64 / spec.views as f64;
            camera::Camera::look_at(
                v as u32,
                spec.width,
                spec.height,
                spec.focal,
                spec.focal,
                Vector3::new(
                    spec.camera_radius * angle.cos(),
                    spec.camera_radius * angle.sin(),
                    height,
                ),
                Vector3::zeros(),
                Vector3::new(0.0, 0.0, 1.0),
            )
        })
        .collect()
}

/// Ground-truth masks: render the labels as if they were the attribute and
/// binarize at 0.5.
pub fn render_gt_masks(
    scene: &GaussianScene,
    labels: &[bool],
    cameras: &[Camera],
) -> Result<Vec<TamperMask>> {
    if labels.len() != scene.count() {
        return Err(Error::Shape(format!(
            "{} labels for {} gaussians",
            labels.len(),
            scene.count()
        )));
    }
    let values: Vec<f64> = labels.iter().map(|&b| b as u8 as f64).collect();
    cameras
        .iter()
        .map(|cam| {
            let img = PreparedView::new(scene, cam)?.render_scalar(&values);
            let bin = eval::binarize(&img, 0.5);
            Ok(TamperMask {
                view_id: cam.id,
                width: bin.width,
                height: bin.height,
                labels: bin.data,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distortion {
    MaskGaussNoise,
    MaskGaussBlur,
    ScaleNoise,
    OpacityNoise,
}

impl FromStr for Distortion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask-gauss-noise" => Ok(Distortion::MaskGaussNoise),
            "mask-gauss-blur" => Ok(Distortion::MaskGaussBlur),
            "scale-noise" => Ok(Distortion::ScaleNoise),
            "opacity-noise" => Ok(Distortion::OpacityNoise),
            other => Err(Error::Config(format!("unknown distortion {other:?}"))),
        }
    }
}

fn check_magnitude(magnitude: f64) -> Result<()> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::Config(format!("magnitude must be non-negative, got {magnitude}")));
    }
    Ok(())
}

/// Perturb model attributes. Magnitude zero is an exact no-op; Gaussians are
/// visited in index order so a fixed seed reproduces the same perturbation.
pub fn distort_scene(
    scene: &mut GaussianScene,
    kind: Distortion,
    magnitude: f64,
    seed: u64,
) -> Result<()> {
    check_magnitude(magnitude)?;
    if magnitude == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, magnitude).map_err(|e| Error::Config(e.to_string()))?;
    match kind {
        Distortion::ScaleNoise => {
            for s in &mut scene.log_scales {
                *s = s.map(|v| v + noise.sample(&mut rng));
            }
        }
        Distortion::OpacityNoise => {
            for o in &mut scene.raw_opacities {
                *o += noise.sample(&mut rng);
            }
        }
        Distortion::MaskGaussNoise | Distortion::MaskGaussBlur => {
            return Err(Error::Config("mask distortions do not apply to a model".into()));
        }
    }
    Ok(())
}

/// Perturb masks. Magnitude zero is an exact no-op; masks are visited in
/// order and pixels row-major, so a fixed seed is reproducible.
pub fn distort_masks(
    masks: &mut [TamperMask],
    kind: Distortion,
    magnitude: f64,
    seed: u64,
) -> Result<()> {
    check_magnitude(magnitude)?;
    if magnitude == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        Distortion::MaskGaussNoise => {
            let noise = Normal::new(0.0, magnitude).map_err(|e| Error::Config(e.to_string()))?;
            for mask in masks {
                for l in &mut mask.labels {
                    let v = (*l as u8 as f64) + noise.sample(&mut rng);
                    *l = v >= 0.5;
                }
            }
        }
        Distortion::MaskGaussBlur => {
            let kernel = gaussian_kernel(magnitude);
            for mask in masks.iter_mut() {
                blur_mask(mask, &kernel);
            }
        }
        Distortion::ScaleNoise | Distortion::OpacityNoise => {
            return Err(Error::Config("model distortions do not apply to masks".into()));
        }
    }
    Ok(())
}

/// Normalized 1D Gaussian taps with half-width ceil(radius) and sigma
/// radius / 2.
fn gaussian_kernel(radius: f64) -> Vec<f64> {
    let half = radius.ceil() as i64;
    if half == 0 {
        return vec![1.0];
    }
    let sigma = radius / 2.0;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let z: f64 = k.iter().sum();
    for w in &mut k {
        *w /= z;
    }
    k
}

fn blur_mask(mask: &mut TamperMask, kernel: &[f64]) {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let half = (kernel.len() / 2) as i64;
    let src: Vec<f64> = mask.labels.iter().map(|&l| l as u8 as f64).collect();
    let mut mid = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kw) in kernel.iter().enumerate() {
                let sx = x + ki as i64 - half;
                if (0..w).contains(&sx) {
                    acc += kw * src[(y * w + sx) as usize];
                }
            }
            mid[(y * w + x) as usize] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kw) in kernel.iter().enumerate() {
                let sy = y + ki as i64 - half;
                if (0..h).contains(&sy) {
                    acc += kw * mid[(sy * w + x) as usize];
                }
            }
            mask.labels[(y * w + x) as usize] = acc >= 0.5;
        }
    }
}

/// Everything one synthetic case comprises, in memory.
pub struct Case {
    pub scene: GaussianScene,
    pub labels: Vec<bool>,
    pub cameras: Vec<Camera>,
    pub gt_masks: Vec<TamperMask>,
}

/// Build a full case in memory.
pub fn build_case(spec: &SynthSpec) -> Result<Case> {
    let (scene, labels) = generate_scene(spec)?;
    let cameras = ring_cameras(spec)?;
    let gt_masks = render_gt_masks(&scene, &labels, &cameras)?;
    Ok(Case { scene, labels, cameras, gt_masks })
}

/// Build a case and write its directory layout: model.ply, cameras.json,
/// masks/ (working copies), gt_masks/, labels.json, and spec.json.
pub fn write_case(dir: &Path, spec: &SynthSpec) -> Result<Case> {
    let case = build_case(spec)?;
    let wrap = |e: std::io::Error| Error::Write(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir.join("masks")).map_err(wrap)?;
    std::fs::create_dir_all(dir.join("gt_masks")).map_err(wrap)?;
    ply::save_ply(&dir.join("model.ply"), &case.scene)?;
    camera::save_cameras(&dir.join("cameras.json"), &case.cameras)?;
    for mask in &case.gt_masks {
        mask.save_png(&dir.join("gt_masks").join(format!("mask_{}.png", mask.view_id)))?;
        mask.save_png(&dir.join("masks").join(format!("mask_{}.png", mask.view_id)))?;
    }
    let labels_json = serde_json::to_string(&case.labels)
        .map_err(|e| Error::Write(format!("labels: {e}")))?;
    std::fs::write(dir.join("labels.json"), labels_json).map_err(wrap)?;
    let spec_json = serde_json::to_string_pretty(spec)
        .map_err(|e| Error::Write(format!("spec: {e}")))?;
    std::fs::write(dir.join("spec.json"), spec_json).map_err(wrap)?;
    Ok(case)
}

/// Read back a labels.json file.
pub fn load_labels(path: &Path) -> Result<Vec<bool>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Read back a spec.json file.
pub fn load_spec(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
