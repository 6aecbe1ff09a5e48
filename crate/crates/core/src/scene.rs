//! Gaussian scene model.
//!
//! Storage follows the usual splatting PLY conventions: scales are kept in
//! log space, opacities before the sigmoid, quaternions in (w, x, y, z)
//! order, SH coefficients channel-major. Values live in f64 in memory and
//! are exchanged as float32 on disk; anything loaded from a file is exactly
//! representable in f32, so save/load round-trips bit-exactly.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Per-Gaussian tampering attribute bounds.
pub const TAMPER_MIN: f64 = 0.0;
pub const TAMPER_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    /// World-space centers.
    pub positions: Vec<Vector3<f64>>,
    /// Unit quaternions, (w, x, y, z).
    pub rotations: Vec<[f64; 4]>,
    /// Log-space scales; activated scale is exp of each component.
    pub log_scales: Vec<Vector3<f64>>,
    /// Pre-sigmoid opacities.
    pub raw_opacities: Vec<f64>,
    /// SH coefficients, stride `3 * (1 + rest_per_channel)` per Gaussian:
    /// 3 DC values then the remaining coefficients channel-major.
    pub sh: Vec<f64>,
    pub sh_degree: u8,
    /// Tampering attribute r, in [0, 1].
    pub tamper: Vec<f64>,
}

/// Number of SH coefficients per channel beyond DC for a given degree.
pub fn sh_rest_per_channel(degree: u8) -> usize {
    (degree as usize + 1) * (degree as usize + 1) - 1
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse sigmoid; input must be strictly inside (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl GaussianScene {
    /// Empty scene with the given SH degree.
    pub fn empty(sh_degree: u8) -> Self {
        GaussianScene {
            positions: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            raw_opacities: Vec::new(),
            sh: Vec::new(),
            sh_degree,
            tamper: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    /// SH values per Gaussian.
    pub fn sh_stride(&self) -> usize {
        3 * (1 + sh_rest_per_channel(self.sh_degree))
    }

    pub fn sh_of(&self, i: usize) -> &[f64] {
        let s = self.sh_stride();
        &self.sh[i * s..(i + 1) * s]
    }

    /// Activated opacity, in (0, 1).
    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.raw_opacities[i])
    }

    /// Activated scale, componentwise exp of the stored log scale.
    pub fn scale(&self, i: usize) -> Vector3<f64> {
        self.log_scales[i].map(f64::exp)
    }

    /// Check the structural invariants: equal array lengths, finite values,
    /// unit quaternions, tamper attribute within bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.count();
        if self.rotations.len() != n
            || self.log_scales.len() != n
            || self.raw_opacities.len() != n
            || self.tamper.len() != n
            || self.sh.len() != n * self.sh_stride()
        {
            return Err(Error::Shape(format!(
                "scene arrays disagree on Gaussian count {n}"
            )));
        }
        for i in 0..n {
            let finite = self.positions[i].iter().all(|v| v.is_finite())
                && self.rotations[i].iter().all(|v| v.is_finite())
                && self.log_scales[i].iter().all(|v| v.is_finite())
                && self.raw_opacities[i].is_finite()
                && self.tamper[i].is_finite();
            if !finite {
                return Err(Error::Numeric(format!("non-finite parameter at Gaussian {i}")));
            }
            let q = self.rotations[i];
            let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Numeric(format!(
                    "quaternion {i} has norm {norm}, expected 1"
                )));
            }
            if !(TAMPER_MIN..=TAMPER_MAX).contains(&self.tamper[i]) {
                return Err(Error::Numeric(format!(
                    "tamper attribute {} at Gaussian {i} outside [0, 1]",
                    self.tamper[i]
                )));
            }
        }
        Ok(())
    }

    /// Min-max normalize the tamper attribute over the whole scene.
    /// A constant attribute maps to all zeros. Idempotent.
    pub fn normalize_tamper(&mut self) {
        let Some(&first) = self.tamper.first() else { return };
        let (mut lo, mut hi) = (first, first);
        for &v in &self.tamper {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi == lo {
            self.tamper.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let span = hi - lo;
            self.tamper.iter_mut().for_each(|v| *v = (*v - lo) / span);
        }
    }
}

/// 3D covariance, 6 unique entries of the symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl Covariance3 {
    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }
}

/// Rotation matrix of a unit quaternion in (w, x, y, z) order.
pub fn quat_to_rotation(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// World-space covariance R diag(s)^2 R^T from an activated scale and a unit
/// quaternion. The result is symmetric PSD with eigenvalues {s_k^2}.
pub fn covariance(scale: Vector3<f64>, q: [f64; 4]) -> Result<Covariance3> {
    if !(scale.iter().all(|v| v.is_finite()) && q.iter().all(|v| v.is_finite())) {
        return Err(Error::Numeric("non-finite covariance inputs".into()));
    }
    let r = quat_to_rotation(q);
    let d = Matrix3::from_diagonal(&scale.map(|s| s * s));
    let m = r * d * r.transpose();
    let c = Covariance3 {
        xx: m[(0, 0)],
        xy: m[(0, 1)],
        xz: m[(0, 2)],
        yy: m[(1, 1)],
        yz: m[(1, 2)],
        zz: m[(2, 2)],
    };
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite covariance result".into()));
    }
    Ok(c)
}

/// Scene equality on every stored field, bit for bit.
pub fn scenes_identical(a: &GaussianScene, b: &GaussianScene) -> bool {
    a.sh_degree == b.sh_degree
        && a.count() == b.count()
        && a.positions == b.positions
        && a.rotations == b.rotations
        && a.log_scales == b.log_scales
        && a.raw_opacities == b.raw_opacities
        && a.sh == b.sh
        && a.tamper == b.tamper
}
