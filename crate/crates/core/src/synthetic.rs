//! Seeded synthetic image pairs: textured elliptical objects on smooth
//! low-contrast backgrounds, so that edge saliency concentrates on a few
//! regions the way object saliency does in natural photographs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor_io::ImageTensor;

/// Side of the square images produced by [`synthetic_pairs`].
pub const DEFAULT_SIDE: usize = 32;

pub fn synthetic_image<R: Rng + ?Sized>(rng: &mut R, channels: usize, height: usize, width: usize) -> Result<ImageTensor> {
    let base: Vec<f32> = (0..channels).map(|_| rng.random_range(0.2..0.8)).collect();
    let (gy, gx): (f32, f32) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let mut data = Vec::with_capacity(channels * height * width);
    for &b in &base {
        for y in 0..height {
            for x in 0..width {
                let v = b + gy * y as f32 / height as f32 + gx * x as f32 / width as f32;
                data.push(v);
            }
        }
    }

    let objects = rng.random_range(1..=3);
    let short = height.min(width) as f32;
    for _ in 0..objects {
        let cy = rng.random_range(0.0..height as f32);
        let cx = rng.random_range(0.0..width as f32);
        let ry = rng.random_range(short / 10.0..short / 4.0);
        let rx = rng.random_range(short / 10.0..short / 4.0);
        let colour: Vec<f32> = (0..channels).map(|_| rng.random_range(0.0..1.0)).collect();
        let freq = rng.random_range(0.5..1.5f32);
        let angle = rng.random_range(0.0..std::f32::consts::PI);
        let (sa, ca) = angle.sin_cos();
        for y in 0..height {
            for x in 0..width {
                let dy = (y as f32 - cy) / ry;
                let dx = (x as f32 - cx) / rx;
                if dy * dy + dx * dx > 1.0 {
                    continue;
                }
                let stripe = 0.15 * (freq * (ca * x as f32 + sa * y as f32)).sin();
                for (k, &c) in colour.iter().enumerate() {
                    data[(k * height + y) * width + x] = c + stripe;
                }
            }
        }
    }
    ImageTensor::from_clamped(channels, height, width, data)
}

/// `count` RGB pairs of side [`DEFAULT_SIDE`], deterministic in `seed`.
pub fn synthetic_pairs(seed: u64, count: usize) -> Result<Vec<(ImageTensor, ImageTensor)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = synthetic_image(&mut rng, 3, DEFAULT_SIDE, DEFAULT_SIDE)?;
            let b = synthetic_image(&mut rng, 3, DEFAULT_SIDE, DEFAULT_SIDE)?;
            Ok((a, b))
        })
        .collect()
}
