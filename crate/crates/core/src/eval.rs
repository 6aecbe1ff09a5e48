//! Mask binarization and localization scoring.
//!
//! Predicted masks come from rendering the tampering attribute and
//! thresholding; they are scored against ground-truth masks with pixel-level
//! F1 and IoU. A view where both masks are empty scores 1 on both metrics.

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::render::{self, ScalarImage};
use crate::scene::GaussianScene;
use crate::vote::TamperMask;

/// A binary prediction image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

/// Threshold a scalar image: pixels at or above the threshold are tampered.
pub fn binarize(img: &ScalarImage, threshold: f64) -> BinaryImage {
    BinaryImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| v >= threshold).collect(),
    }
}

/// Pixel confusion counts with the derived metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_count: u64,
    pub tn: u64,
    pub f1: f64,
    pub iou: f64,
}

/// Score one predicted mask against ground truth.
pub fn score(pred: &BinaryImage, gt: &TamperMask) -> Result<Score> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut tp, mut fp, mut fn_count, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &g) in pred.data.iter().zip(&gt.labels) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_count += 1,
            (false, false) => tn += 1,
        }
    }
    let (f1, iou) = if tp + fp + fn_count == 0 {
        (1.0, 1.0)
    } else {
        (
            2.0 * tp as f64 / (2 * tp + fp + fn_count) as f64,
            tp as f64 / (tp + fp + fn_count) as f64,
        )
    };
    Ok(Score { tp, fp, fn_count, tn, f1, iou })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub view_id: u32,
    #[serde(flatten)]
    pub score: Score,
}

/// Scores for every view plus unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub threshold: f64,
    pub views: Vec<ViewScore>,
    pub mean_f1: f64,
    pub mean_iou: f64,
}

impl ScoreReport {
    /// Plain-text table, one row per view plus the mean row.
    pub fn to_table(&self) -> String {
        let mut out = String::from("view        f1       iou        tp        fp        fn\n");
        for v in &self.views {
            out.push_str(&format!(
                "{:>4}  {:>8.4}  {:>8.4}  {:>8}  {:>8}  {:>8}\n",
                v.view_id, v.score.f1, v.score.iou, v.score.tp, v.score.fp, v.score.fn_count
            ));
        }
        out.push_str(&format!("mean  {:>8.4}  {:>8.4}\n", self.mean_f1, self.mean_iou));
        out
    }
}

/// Render the tampering attribute in every view, binarize, and score against
/// the paired ground-truth masks.
pub fn evaluate_views(
    scene: &GaussianScene,
    cameras: &[Camera],
    gt_masks: &[TamperMask],
    threshold: f64,
) -> Result<ScoreReport> {
    if cameras.len() != gt_masks.len() {
        return Err(Error::Config(format!(
            "{} cameras but {} ground-truth masks",
            cameras.len(),
            gt_masks.len()
        )));
    }
    if cameras.is_empty() {
        return Err(Error::Config("no views to evaluate".into()));
    }
    let mut views = Vec::with_capacity(cameras.len());
    for (cam, gt) in cameras.iter().zip(gt_masks) {
        if cam.id != gt.view_id {
            return Err(Error::Config(format!(
                "ground-truth mask for view {} paired with camera {}",
                gt.view_id, cam.id
            )));
        }
        let rendered = render::render_attribute(scene, cam)?;
        let s = score(&binarize(&rendered, threshold), gt)?;
        views.push(ViewScore { view_id: cam.id, score: s });
    }
    let n = views.len() as f64;
    let mean_f1 = views.iter().map(|v| v.score.f1).sum::<f64>() / n;
    let mean_iou = views.iter().map(|v| v.score.iou).sum::<f64>() / n;
    Ok(ScoreReport { threshold, views, mean_f1, mean_iou })
}
