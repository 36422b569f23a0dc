//! Seeded band-limited noise textures.

use crate::imgcore::{GrayFrame, Plane};
use crate::optflow::gaussian_blur;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Blur applied to white noise; keeps the texture smooth enough for sub-pixel
/// interpolation while leaving structure at the flow window scale.
const TEXTURE_SIGMA: f32 = 1.2;

/// `width × height` noise texture, blurred and stretched to `[lo, hi]`.
pub fn noise_texture(width: usize, height: usize, seed: u64, lo: f32, hi: f32) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Plane {
        width,
        height,
        data: (0..width * height).map(|_| rng.random::<f32>()).collect(),
    };
    let mut p = gaussian_blur(&raw, TEXTURE_SIGMA);
    let (mn, mx) = p
        .data
        .iter()
        .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (mx - mn).max(1e-6);
    for v in p.data.iter_mut() {
        *v = lo + (*v - mn) / span * (hi - lo);
    }
    p
}

/// Textured 8-bit frame for tests and examples.
pub fn textured_frame(width: usize, height: usize, seed: u64) -> GrayFrame {
    noise_texture(width, height, seed, 20.0, 235.0)
        .to_frame()
        .expect("texture dimensions are valid frame dimensions")
}
