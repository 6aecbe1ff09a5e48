//! Joint refinement of the tampering attribute.
//!
//! Each iteration renders the attribute into one view (round-robin), scores
//! it against that view's tamper mask with the signed 2D loss, backpropagates
//! to per-Gaussian gradients, optionally adds the contrastive 3D gradient,
//! and applies one Adam step with the attribute clamped to [0, 1]. The first
//! `warmup_iters` iterations use the 2D term alone.

use std::path::Path;

use crate::camera::Camera;
use crate::contrastive::{self, FeatureConfig, Partition};
use crate::error::{Error, Result};
use crate::render::{PreparedView, ScalarImage};
use crate::scene::GaussianScene;
use crate::vote::TamperMask;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    /// Weight on rendered mass inside tampered pixels (rewarded).
    pub lambda1: f64,
    /// Weight on rendered mass inside authentic pixels (penalized).
    pub lambda2: f64,
    /// Weight of the 2D term in the combined loss.
    pub beta: f64,
    /// Weight of the 3D contrastive term in the combined loss.
    pub gamma: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Iterations 1..=warmup_iters use the 2D term only.
    pub warmup_iters: u64,
    pub total_iters: u64,
    pub tau_high: f64,
    pub tau_low: f64,
    pub features: FeatureConfig,
    /// Reuse the partition and directions computed at the start of the joint
    /// phase instead of refreshing them every iteration.
    pub freeze_partition: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lambda1: 1.0,
            lambda2: 10.0,
            beta: 1.0,
            gamma: 10.0,
            lr: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            warmup_iters: 50,
            total_iters: 200,
            tau_high: 0.7,
            tau_low: 0.05,
            features: FeatureConfig::default(),
            freeze_partition: false,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.lambda1, self.lambda2, self.beta, self.gamma, self.lr];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("loss weights and lr must be finite".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        contrastive::partition(&[], self.tau_high, self.tau_low)?;
        Ok(())
    }
}

/// Signed per-view mask loss.
///
/// Tampered pixels reward rendered attribute mass with weight lambda1,
/// authentic pixels penalize it with weight lambda2; the loss is linear in
/// the image so the returned per-pixel gradient is exact.
pub fn loss_2d(
    rendered: &ScalarImage,
    mask: &TamperMask,
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, ScalarImage)> {
    if rendered.width != mask.width || rendered.height != mask.height {
        return Err(Error::Shape(format!(
            "rendered image is {}x{}, mask is {}x{}",
            rendered.width, rendered.height, mask.width, mask.height
        )));
    }
    let mut grad = ScalarImage::zeros(rendered.width, rendered.height);
    let mut value = 0.0;
    for (i, (&v, &tampered)) in rendered.data.iter().zip(&mask.labels).enumerate() {
        if tampered {
            value -= lambda1 * v;
            grad.data[i] = -lambda1;
        } else {
            value += lambda2 * v;
            grad.data[i] = lambda2;
        }
    }
    Ok((value, grad))
}

/// Adam with bias correction over the attribute vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One update step; the attribute is clamped to [0, 1] afterwards.
    pub fn step(&mut self, r: &mut [f64], grad: &[f64], cfg: &OptimConfig) {
        assert_eq!(r.len(), self.m.len(), "parameter count");
        assert_eq!(grad.len(), self.m.len(), "gradient count");
        self.t += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.adam_beta2.powi(self.t as i32);
        for i in 0..r.len() {
            self.m[i] = cfg.adam_beta1 * self.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
            self.v[i] = cfg.adam_beta2 * self.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            r[i] = (r[i] - cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps)).clamp(0.0, 1.0);
        }
    }
}

/// One trace row per iteration. Losses and partition sizes reflect the state
/// the update was computed from; `mean_r` is measured after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iteration: u64,
    pub view_id: u32,
    pub loss_2d: f64,
    pub loss_3d: f64,
    pub loss_total: f64,
    pub mean_r: f64,
    pub n_high: usize,
    pub n_mid: usize,
    pub n_low: usize,
}

pub fn trace_csv_string(rows: &[IterationTrace]) -> String {
    let mut out =
        String::from("iteration,view_id,loss_2d,loss_3d,loss_total,mean_r,n_high,n_mid,n_low\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iteration,
            r.view_id,
            r.loss_2d,
            r.loss_3d,
            r.loss_total,
            r.mean_r,
            r.n_high,
            r.n_mid,
            r.n_low
        ));
    }
    out
}

pub fn write_trace_csv(path: &Path, rows: &[IterationTrace]) -> Result<()> {
    std::fs::write(path, trace_csv_string(rows))
        .map_err(|e| Error::Write(format!("{}: {e}", path.display())))
}

struct FrozenTerm {
    part: Partition,
    directions: Vec<f64>,
}

/// Run the refinement loop in place on `scene.tamper`.
///
/// Views are visited round-robin in camera order; view geometry is prepared
/// once since it does not depend on the attribute. When the 3D term is
/// active but either confident set is empty, that iteration falls back to
/// the 2D term alone and records a zero 3D loss.
pub fn run_optimization(
    scene: &mut GaussianScene,
    cameras: &[Camera],
    masks: &[TamperMask],
    cfg: &OptimConfig,
) -> Result<Vec<IterationTrace>> {
    cfg.validate()?;
    if cameras.is_empty() {
        return Err(Error::Config("optimization needs at least one view".into()));
    }
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
    }

    let prepared: Vec<PreparedView> =
        cameras.iter().map(|c| PreparedView::new(scene, c)).collect::<Result<_>>()?;
    let features = contrastive::feature_matrix(scene, &cfg.features);
    let n = scene.count();
    let mut adam = AdamState::new(n);
    let mut frozen: Option<FrozenTerm> = None;
    let mut trace = Vec::with_capacity(cfg.total_iters as usize);

    for iteration in 1..=cfg.total_iters {
        let vi = ((iteration - 1) % cameras.len() as u64) as usize;
        let rendered = prepared[vi].render_scalar(&scene.tamper);
        let (l2d, grad_img) = loss_2d(&rendered, &masks[vi], cfg.lambda1, cfg.lambda2)?;
        let g2d = prepared[vi].backward_scalar(&grad_img)?;
        let mut grad: Vec<f64> = g2d.iter().map(|g| cfg.beta * g).collect();

        let live = contrastive::partition(&scene.tamper, cfg.tau_high, cfg.tau_low)?;
        let mut l3d = 0.0;
        let mut counts = (live.high.len(), live.mid.len(), live.low.len());
        if iteration > cfg.warmup_iters && cfg.gamma != 0.0 {
            if cfg.freeze_partition && frozen.is_none() {
                match contrastive::middle_directions(&features, &live) {
                    Ok(directions) => {
                        frozen = Some(FrozenTerm { part: live.clone(), directions })
                    }
                    Err(Error::Anchor(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            let term = if cfg.freeze_partition {
                frozen
                    .as_ref()
                    .map(|f| (f.part.clone(), f.directions.clone()))
            } else {
                match contrastive::middle_directions(&features, &live) {
                    Ok(directions) => Some((live.clone(), directions)),
                    Err(Error::Anchor(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            if let Some((part, directions)) = term {
                let (l, g3d) = contrastive::loss_3d(&scene.tamper, &part.mid, &directions);
                l3d = l;
                for (g, g3) in grad.iter_mut().zip(&g3d) {
                    *g += cfg.gamma * g3;
                }
                counts = (part.high.len(), part.mid.len(), part.low.len());
            }
        }

        adam.step(&mut scene.tamper, &grad, cfg);

        let mean_r = if n == 0 { 0.0 } else { scene.tamper.iter().sum::<f64>() / n as f64 };
        trace.push(IterationTrace {
            iteration,
            view_id: cameras[vi].id,
            loss_2d: l2d,
            loss_3d: l3d,
            loss_total: cfg.beta * l2d + cfg.gamma * l3d,
            mean_r,
            n_high: counts.0,
            n_mid: counts.1,
            n_low: counts.2,
        });
    }
    Ok(trace)
}
