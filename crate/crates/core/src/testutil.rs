//! Helpers for unit tests. Everything generated here is exactly
//! representable in f32 so disk round-trips stay bit-exact.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::scene::{sh_rest_per_channel, GaussianScene};

fn f32r(v: f64) -> f64 {
    v as f32 as f64
}

/// Random but valid scene: unit quaternions, finite parameters, r in [0, 1].
pub fn random_scene(seed: u64, n: usize, sh_degree: u8) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = GaussianScene::empty(sh_degree);
    let rest = 3 * sh_rest_per_channel(sh_degree);
    for _ in 0..n {
        s.positions.push(Vector3::new(
            f32r(rng.random_range(-2.0..2.0)),
            f32r(rng.random_range(-2.0..2.0)),
            f32r(rng.random_range(-2.0..2.0)),
        ));
        let q = loop {
            let q = [
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-3 {
                break [
                    f32r(q[0] / norm),
                    f32r(q[1] / norm),
                    f32r(q[2] / norm),
                    f32r(q[3] / norm),
                ];
            }
        };
        s.rotations.push(q);
        s.log_scales.push(Vector3::new(
            f32r(rng.random_range(-4.0..-1.0)),
            f32r(rng.random_range(-4.0..-1.0)),
            f32r(rng.random_range(-4.0..-1.0)),
        ));
        s.raw_opacities.push(f32r(rng.random_range(-2.0..4.0)));
        for _ in 0..3 + rest {
            s.sh.push(f32r(rng.random_range(-1.5..1.5)));
        }
        s.tamper.push(f32r(rng.random_range(0.0..1.0)));
    }
    s
}
