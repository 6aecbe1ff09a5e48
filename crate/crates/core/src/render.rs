//! Differentiable scalar-attribute and color splatting.
//!
//! Gaussians are projected once per view, depth-sorted (ties broken by
//! index), binned into 16x16 pixel tiles by their 3-sigma footprint, then
//! alpha-blended front to back per pixel. Blend weights depend only on
//! geometry, never on the blended attribute, so the forward pass is linear
//! in r and the backward pass is its exact adjoint.
//!
//! Concurrency: pixels are rendered row-parallel into disjoint slices;
//! backward accumulation computes per-row partial sums in parallel and then
//! reduces them in row order, so gradients are bitwise reproducible for any
//! thread count.

use nalgebra::Vector3;

use crate::camera::{Camera, Z_NEAR};
use crate::error::{Error, Result};
use crate::exec;
use crate::scene::{covariance, sigmoid, GaussianScene};

/// Opacity ceiling per contribution.
pub const ALPHA_MAX: f64 = 0.99;
/// Contributions below this alpha are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Front-to-back blending stops once transmittance drops below this.
pub const TRANSMITTANCE_STOP: f64 = 1e-4;

const TILE: usize = 16;

/// Row-major grid of f64 pixel values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ScalarImage {
    pub fn zeros(width: u32, height: u32) -> Self {
        ScalarImage { width, height, data: vec![0.0; (width * height) as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        self.data[(y * self.width + x) as usize] = v;
    }
}

/// Row-major grid of RGB triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
struct Splat {
    u: f64,
    v: f64,
    /// Inverse 2D covariance, [a, b, c] for [[a, b], [b, c]].
    conic: [f64; 3],
    opacity: f64,
    /// Source Gaussian index.
    index: u32,
}

/// A scene projected into one camera: culled, depth-sorted, tile-binned.
/// Valid until any non-r scene parameter or the camera changes; r itself
/// does not participate, so one prepared view serves many r values.
pub struct PreparedView {
    pub width: u32,
    pub height: u32,
    gaussian_count: usize,
    splats: Vec<Splat>,
    tile_cols: usize,
    bins: Vec<Vec<u32>>,
}

impl PreparedView {
    pub fn new(scene: &GaussianScene, camera: &Camera) -> Result<PreparedView> {
        let (w, h) = (camera.width as f64, camera.height as f64);
        let n = scene.count();

        struct Proj {
            u: f64,
            v: f64,
            z: f64,
            conic: [f64; 3],
            radius: f64,
            opacity: f64,
            index: u32,
        }
        let projected: Vec<Option<Proj>> = exec::map_indexed(n, |i| {
            let p = camera.rotation * scene.positions[i] + camera.translation;
            if !(p.z > Z_NEAR) {
                return None;
            }
            let u = camera.fx * p.x / p.z + camera.cx;
            let v = camera.fy * p.y / p.z + camera.cy;
            let cov3 = covariance(scene.scale(i), scene.rotations[i]).ok()?;
            let cov2 = camera.project_covariance(&scene.positions[i], &cov3).ok()?;
            let (s11, s12, s22) = (cov2[(0, 0)], cov2[(0, 1)], cov2[(1, 1)]);
            let det = s11 * s22 - s12 * s12;
            if !(det > 0.0) || !u.is_finite() || !v.is_finite() {
                return None;
            }
            let mid = 0.5 * (s11 + s22);
            let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
            let radius = 3.0 * lambda_max.sqrt();
            // Culled when the center sits outside the image expanded by the
            // 3-sigma extent.
            if u < -radius || u >= w + radius || v < -radius || v >= h + radius {
                return None;
            }
            let opacity = sigmoid(scene.raw_opacities[i]);
            if opacity < ALPHA_MIN {
                return None;
            }
            Some(Proj {
                u,
                v,
                z: p.z,
                conic: [s22 / det, -s12 / det, s11 / det],
                radius,
                opacity,
                index: i as u32,
            })
        });

        let mut visible: Vec<Proj> = projected.into_iter().flatten().collect();
        visible.sort_by(|a, b| {
            a.z.partial_cmp(&b.z).expect("depths are finite").then(a.index.cmp(&b.index))
        });

        let tile_cols = (camera.width as usize).div_ceil(TILE);
        let tile_rows = (camera.height as usize).div_ceil(TILE);
        let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tile_cols * tile_rows];
        let mut splats = Vec::with_capacity(visible.len());
        for (si, p) in visible.iter().enumerate() {
            let x0 = ((p.u - p.radius).floor().max(0.0) as usize).min(camera.width as usize - 1);
            let x1 = ((p.u + p.radius).ceil().max(0.0) as usize).min(camera.width as usize - 1);
            let y0 = ((p.v - p.radius).floor().max(0.0) as usize).min(camera.height as usize - 1);
            let y1 = ((p.v + p.radius).ceil().max(0.0) as usize).min(camera.height as usize - 1);
            for ty in y0 / TILE..=y1 / TILE {
                for tx in x0 / TILE..=x1 / TILE {
                    bins[ty * tile_cols + tx].push(si as u32);
                }
            }
            splats.push(Splat {
                u: p.u,
                v: p.v,
                conic: p.conic,
                opacity: p.opacity,
                index: p.index,
            });
        }
        Ok(PreparedView {
            width: camera.width,
            height: camera.height,
            gaussian_count: n,
            splats,
            tile_cols,
            bins,
        })
    }

    /// Walk the blend list of one pixel front to back, handing each kept
    /// contribution (splat index, blend weight) to `f`. Returns the final
    /// transmittance.
    #[inline]
    fn visit_pixel<F: FnMut(u32, f64)>(&self, x: usize, y: usize, mut f: F) -> f64 {
        let bin = &self.bins[(y / TILE) * self.tile_cols + x / TILE];
        let px = x as f64 + 0.5;
        let py = y as f64 + 0.5;
        let mut t = 1.0;
        for &si in bin {
            let s = &self.splats[si as usize];
            let dx = px - s.u;
            let dy = py - s.v;
            let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
            let alpha = (s.opacity * (-0.5 * q).exp()).min(ALPHA_MAX);
            if alpha < ALPHA_MIN {
                continue;
            }
            f(si, alpha * t);
            t *= 1.0 - alpha;
            if t < TRANSMITTANCE_STOP {
                break;
            }
        }
        t
    }

    /// Blend a per-Gaussian scalar. `values` is indexed by Gaussian.
    pub fn render_scalar(&self, values: &[f64]) -> ScalarImage {
        assert_eq!(values.len(), self.gaussian_count, "scalar buffer length");
        let mut img = ScalarImage::zeros(self.width, self.height);
        let width = self.width as usize;
        exec::for_each_chunk_mut(&mut img.data, width, |y, row| {
            for (x, out) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                self.visit_pixel(x, y, |si, w| {
                    acc += values[self.splats[si as usize].index as usize] * w;
                });
                *out = acc;
            }
        });
        img
    }

    /// As `render_scalar` but also returns the final transmittance per pixel.
    pub fn render_scalar_with_transmittance(&self, values: &[f64]) -> (ScalarImage, ScalarImage) {
        assert_eq!(values.len(), self.gaussian_count, "scalar buffer length");
        let width = self.width as usize;
        let rows: Vec<Vec<(f64, f64)>> = exec::map_indexed(self.height as usize, |y| {
            (0..width)
                .map(|x| {
                    let mut acc = 0.0;
                    let t = self.visit_pixel(x, y, |si, w| {
                        acc += values[self.splats[si as usize].index as usize] * w;
                    });
                    (acc, t)
                })
                .collect()
        });
        let mut img = ScalarImage::zeros(self.width, self.height);
        let mut trans = ScalarImage::zeros(self.width, self.height);
        for (y, row) in rows.into_iter().enumerate() {
            for (x, (v, t)) in row.into_iter().enumerate() {
                img.data[y * width + x] = v;
                trans.data[y * width + x] = t;
            }
        }
        (img, trans)
    }

    /// Blend a per-Gaussian RGB triple. `values` is indexed by Gaussian.
    pub fn render_rgb(&self, values: &[[f64; 3]]) -> ColorImage {
        assert_eq!(values.len(), self.gaussian_count, "rgb buffer length");
        let width = self.width as usize;
        let rows: Vec<Vec<[f64; 3]>> = exec::map_indexed(self.height as usize, |y| {
            let mut row = vec![[0.0; 3]; width];
            for (x, out) in row.iter_mut().enumerate() {
                self.visit_pixel(x, y, |si, w| {
                    let c = &values[self.splats[si as usize].index as usize];
                    out[0] += c[0] * w;
                    out[1] += c[1] * w;
                    out[2] += c[2] * w;
                });
            }
            row
        });
        let mut data = Vec::with_capacity(width * self.height as usize);
        for row in rows {
            data.extend_from_slice(&row);
        }
        ColorImage { width: self.width, height: self.height, data }
    }

    /// Adjoint of `render_scalar`: g_i = sum_p grad(p) * w_i(p).
    /// Per-row partials are reduced in row order; the result is bitwise
    /// reproducible for any thread count.
    pub fn backward_scalar(&self, grad: &ScalarImage) -> Result<Vec<f64>> {
        if grad.width != self.width || grad.height != self.height {
            return Err(Error::Shape(format!(
                "gradient image is {}x{}, view is {}x{}",
                grad.width, grad.height, self.width, self.height
            )));
        }
        let width = self.width as usize;
        let rows: Vec<Vec<(u32, f64)>> = exec::map_indexed(self.height as usize, |y| {
            let mut contribs = Vec::new();
            for x in 0..width {
                let g = grad.data[y * width + x];
                if g == 0.0 {
                    // Zero gradient rows still walk pixels; skip the pushes.
                    self.visit_pixel(x, y, |_, _| {});
                    continue;
                }
                self.visit_pixel(x, y, |si, w| {
                    contribs.push((self.splats[si as usize].index, g * w));
                });
            }
            contribs
        });
        let mut out = vec![0.0; self.gaussian_count];
        for row in rows {
            for (i, c) in row {
                out[i as usize] += c;
            }
        }
        Ok(out)
    }
}

/// Render the tampering attribute of a scene into one view.
pub fn render_attribute(scene: &GaussianScene, camera: &Camera) -> Result<ScalarImage> {
    Ok(PreparedView::new(scene, camera)?.render_scalar(&scene.tamper))
}

/// Gradient of any scalar pixel loss with image-gradient `grad` with respect
/// to the tampering attribute.
pub fn backward_attribute(
    scene: &GaussianScene,
    camera: &Camera,
    grad: &ScalarImage,
) -> Result<Vec<f64>> {
    PreparedView::new(scene, camera)?.backward_scalar(grad)
}

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Evaluate one channel of an SH expansion along direction d.
/// `dc` is the degree-0 coefficient, `rest` the higher-degree coefficients.
fn eval_sh_channel(dc: f64, rest: &[f64], d: &Vector3<f64>) -> f64 {
    let (x, y, z) = (d.x, d.y, d.z);
    let mut c = SH_C0 * dc;
    if !rest.is_empty() {
        c += -SH_C1 * y * rest[0] + SH_C1 * z * rest[1] - SH_C1 * x * rest[2];
    }
    if rest.len() >= 8 {
        let (xx, yy, zz, xy, yz, xz) = (x * x, y * y, z * z, x * y, y * z, x * z);
        c += SH_C2[0] * xy * rest[3]
            + SH_C2[1] * yz * rest[4]
            + SH_C2[2] * (2.0 * zz - xx - yy) * rest[5]
            + SH_C2[3] * xz * rest[6]
            + SH_C2[4] * (xx - yy) * rest[7];
        if rest.len() >= 15 {
            c += SH_C3[0] * y * (3.0 * xx - yy) * rest[8]
                + SH_C3[1] * xy * z * rest[9]
                + SH_C3[2] * y * (4.0 * zz - xx - yy) * rest[10]
                + SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * rest[11]
                + SH_C3[4] * x * (4.0 * zz - xx - yy) * rest[12]
                + SH_C3[5] * z * (xx - yy) * rest[13]
                + SH_C3[6] * x * (xx - 3.0 * yy) * rest[14];
        }
    }
    (c + 0.5).max(0.0)
}

/// View-dependent RGB of every Gaussian for a camera.
pub fn gaussian_colors(scene: &GaussianScene, camera: &Camera) -> Vec<[f64; 3]> {
    let eye = camera.center();
    let rest_n = crate::scene::sh_rest_per_channel(scene.sh_degree);
    exec::map_indexed(scene.count(), |i| {
        let d = (scene.positions[i] - eye).normalize();
        let sh = scene.sh_of(i);
        let mut rgb = [0.0; 3];
        for (ch, out) in rgb.iter_mut().enumerate() {
            let rest = &sh[3 + ch * rest_n..3 + (ch + 1) * rest_n];
            *out = eval_sh_channel(sh[ch], rest, &d);
        }
        rgb
    })
}

/// Render scene color into one view.
pub fn render_color(scene: &GaussianScene, camera: &Camera) -> Result<ColorImage> {
    let view = PreparedView::new(scene, camera)?;
    let colors = gaussian_colors(scene, camera);
    Ok(view.render_rgb(&colors))
}
