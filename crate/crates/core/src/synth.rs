//! Seeded synthetic training images.
//!
//! Each image is a smooth two-colour gradient with Gaussian blobs and,
//! for some images, a stripe or checker texture on top.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::io::pnm;
use crate::tensor::Tensor;

fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

/// One `[size, size, 3]` image in `[0, 1]`, fully determined by `seed`.
pub fn synth_image(size: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c0, c1) = (color(&mut rng), color(&mut rng));
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let blobs: Vec<([f64; 2], f64, [f64; 3], f64)> = (0..rng.gen_range(1..4))
        .map(|_| {
            let centre = [rng.gen(), rng.gen()];
            let radius = rng.gen_range(0.08..0.25);
            (centre, radius, color(&mut rng), rng.gen_range(0.4..0.9))
        })
        .collect();
    let texture = rng.gen_range(0..3u8);
    let period = rng.gen_range(3.0..8.0);
    let tex_amp = rng.gen_range(0.05..0.2);
    let n = size as f64;
    Tensor::from_fn(&[size, size, 3], |i| {
        let ch = i % 3;
        let (y, x) = ((i / 3) / size, (i / 3) % size);
        let (u, v) = ((x as f64 + 0.5) / n, (y as f64 + 0.5) / n);
        let t = ((u - 0.5) * dx + (v - 0.5) * dy + 0.5).clamp(0.0, 1.0);
        let mut val = c0[ch] * (1.0 - t) + c1[ch] * t;
        for (c, r, col, a) in &blobs {
            let d2 = (u - c[0]).powi(2) + (v - c[1]).powi(2);
            let w = a * (-d2 / (2.0 * r * r)).exp();
            val = val * (1.0 - w) + col[ch] * w;
        }
        let (px, py) = (x as f64 / period, y as f64 / period);
        val += tex_amp
            * match texture {
                1 => (std::f64::consts::TAU * (px + py) / 2.0).sin(),
                2 => {
                    if (px.floor() + py.floor()) as i64 % 2 == 0 {
                        0.5
                    } else {
                        -0.5
                    }
                }
                _ => 0.0,
            };
        val.clamp(0.0, 1.0)
    })
}

/// `count` images with per-image seeds derived from `seed`.
pub fn synth_corpus(count: usize, size: usize, seed: u64) -> Vec<Tensor> {
    crate::par::map_indexed(count, |i| synth_image(size, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
}

/// Writes `img_0000.ppm`, `img_0001.ppm`, … into `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, images: &[Tensor]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, img) in images.iter().enumerate() {
        pnm::write_image(dir.join(format!("img_{i:04}.ppm")), img)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = synth_corpus(4, 16, 9);
        assert_eq!(a, synth_corpus(4, 16, 9));
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|t| t.shape() == [16, 16, 3]));
        assert!(a.iter().flat_map(|t| t.data()).all(|v| (0.0..=1.0).contains(v)));
    }
}
