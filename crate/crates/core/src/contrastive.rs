//! Attribute-driven partition, per-Gaussian appearance features, and the
//! contrastive 3D loss.
//!
//! The scene splits by tampering attribute into a high-confidence tampered
//! set, a low-confidence authentic set, and an undecided middle. Each middle
//! Gaussian is compared in feature space against the mean anchors of the two
//! confident sets, and the loss pushes its attribute toward the closer side.

use crate::error::{Error, Result};
use crate::exec;
use crate::scene::GaussianScene;

/// Index sets split by attribute thresholds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub high: Vec<usize>,
    pub mid: Vec<usize>,
    pub low: Vec<usize>,
}

/// Split indices by attribute: high where r >= tau_high, low where
/// r <= tau_low, mid in between. Requires 0 <= tau_low < tau_high <= 1.
pub fn partition(tamper: &[f64], tau_high: f64, tau_low: f64) -> Result<Partition> {
    if !(tau_low >= 0.0 && tau_low < tau_high && tau_high <= 1.0) {
        return Err(Error::Config(format!(
            "thresholds must satisfy 0 <= tau_low < tau_high <= 1, got ({tau_low}, {tau_high})"
        )));
    }
    let mut p = Partition { high: Vec::new(), mid: Vec::new(), low: Vec::new() };
    for (i, &r) in tamper.iter().enumerate() {
        if r >= tau_high {
            p.high.push(i);
        } else if r <= tau_low {
            p.low.push(i);
        } else {
            p.mid.push(i);
        }
    }
    Ok(p)
}

/// Which spherical-harmonic coefficients enter the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShFeature {
    /// DC color only (3 dims).
    Dc,
    /// DC plus all higher-order coefficients.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub sh: ShFeature,
    pub standardize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { sh: ShFeature::Dc, standardize: true }
    }
}

/// Row-major per-Gaussian feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dims: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> usize {
        if self.dims == 0 { 0 } else { self.data.len() / self.dims }
    }
}

/// Build per-Gaussian features: position (3), activated opacity (1),
/// activated scales (3), rotation quaternion (4), SH coefficients (3 for DC,
/// full stride when requested).
///
/// With standardization on, each dimension is centered and divided by its
/// population standard deviation; dimensions without meaningful variance are
/// set to zero.
pub fn feature_matrix(scene: &GaussianScene, cfg: &FeatureConfig) -> FeatureMatrix {
    let n = scene.count();
    let sh_dims = match cfg.sh {
        ShFeature::Dc => 3,
        ShFeature::Full => scene.sh_stride(),
    };
    let dims = 11 + sh_dims;
    let rows: Vec<Vec<f64>> = exec::map_indexed(n, |i| {
        let mut row = Vec::with_capacity(dims);
        row.extend_from_slice(scene.positions[i].as_slice());
        row.push(scene.opacity(i));
        row.extend_from_slice(scene.scale(i).as_slice());
        row.extend_from_slice(&scene.rotations[i]);
        let sh = scene.sh_of(i);
        match cfg.sh {
            ShFeature::Dc => {
                let rest = scene.sh_stride() / 3 - 1;
                for ch in 0..3 {
                    row.push(sh[ch * (rest + 1)]);
                }
            }
            ShFeature::Full => row.extend_from_slice(sh),
        }
        row
    });
    let mut data = Vec::with_capacity(n * dims);
    for row in &rows {
        data.extend_from_slice(row);
    }
    let mut m = FeatureMatrix { dims, data };
    if cfg.standardize && n > 0 {
        standardize(&mut m, n);
    }
    m
}

fn standardize(m: &mut FeatureMatrix, n: usize) {
    for d in 0..m.dims {
        let mut mean = 0.0;
        for i in 0..n {
            mean += m.data[i * m.dims + d];
        }
        mean /= n as f64;
        let mut var = 0.0;
        for i in 0..n {
            let c = m.data[i * m.dims + d] - mean;
            var += c * c;
        }
        var /= n as f64;
        // Variance at the level of accumulated rounding noise counts as none.
        let floor = 1e-12 * mean.abs().max(1.0);
        if var.sqrt() <= floor {
            for i in 0..n {
                m.data[i * m.dims + d] = 0.0;
            }
        } else {
            let inv = 1.0 / var.sqrt();
            for i in 0..n {
                m.data[i * m.dims + d] = (m.data[i * m.dims + d] - mean) * inv;
            }
        }
    }
}

/// Mean feature vectors of the high and low sets.
///
/// Fails with an anchor error when either confident set is empty.
pub fn anchor_means(features: &FeatureMatrix, part: &Partition) -> Result<(Vec<f64>, Vec<f64>)> {
    let mean_of = |set: &[usize], name: &str| -> Result<Vec<f64>> {
        if set.is_empty() {
            return Err(Error::Anchor(format!("{name} set is empty")));
        }
        let mut acc = vec![0.0; features.dims];
        for &i in set {
            for (a, &x) in acc.iter_mut().zip(features.row(i)) {
                *a += x;
            }
        }
        let inv = 1.0 / set.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        Ok(acc)
    };
    Ok((mean_of(&part.high, "high-confidence")?, mean_of(&part.low, "low-confidence")?))
}

/// Squared Euclidean distance between a feature row and an anchor.
pub fn squared_distance(row: &[f64], anchor: &[f64]) -> f64 {
    row.iter().zip(anchor).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

/// Update direction for one middle Gaussian: +1 pulls its attribute up when
/// it sits closer to the tampered anchor, -1 pushes it down when closer to
/// the authentic anchor, 0 when equidistant.
pub fn update_direction(sim_high: f64, sim_low: f64) -> f64 {
    if sim_low > sim_high {
        1.0
    } else if sim_low < sim_high {
        -1.0
    } else {
        0.0
    }
}

/// Contrastive loss over the middle set with its gradient in r.
///
/// L = -(1/K) sum_i u_i * r_i over middle members, so dL/dr_i = -u_i / K;
/// the partition and anchors are treated as constants of the iteration.
/// An empty middle set yields zero loss and gradient.
pub fn loss_3d(tamper: &[f64], mid: &[usize], directions: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(mid.len(), directions.len(), "one direction per middle member");
    let mut grad = vec![0.0; tamper.len()];
    if mid.is_empty() {
        return (0.0, grad);
    }
    let k = mid.len() as f64;
    let mut loss = 0.0;
    for (&i, &u) in mid.iter().zip(directions) {
        loss -= u * tamper[i] / k;
        grad[i] = -u / k;
    }
    (loss, grad)
}

/// Per-middle update directions from the current anchors. Propagates the
/// anchor error when a confident set is empty.
pub fn middle_directions(features: &FeatureMatrix, part: &Partition) -> Result<Vec<f64>> {
    let (anchor_h, anchor_l) = anchor_means(features, part)?;
    Ok(part
        .mid
        .iter()
        .map(|&i| {
            let row = features.row(i);
            update_direction(squared_distance(row, &anchor_h), squared_distance(row, &anchor_l))
        })
        .collect())
}

/// Full contrastive term for one iteration: anchors, per-middle directions,
/// then the loss and gradient.
pub fn contrastive_term(
    tamper: &[f64],
    features: &FeatureMatrix,
    part: &Partition,
) -> Result<(f64, Vec<f64>)> {
    let directions = middle_directions(features, part)?;
    Ok(loss_3d(tamper, &part.mid, &directions))
}
