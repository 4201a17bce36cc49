//! Synthetic bimodal data: a bar image at angle θ and the vector
//! `(cos 2θ, sin 2θ)` with Gaussian noise.

use std::f64::consts::PI;

use super::{MultimodalDataset, Split};
use crate::error::{Error, Result};
use crate::raster;
use crate::rng::SplitRng;
use crate::tensor::Tensor;

pub const IMAGE: &str = "image";
pub const ANGLE: &str = "angle";

/// Bar through the image center at angle `theta` (radians, counter-clockwise
/// from horizontal), length 80% of the side.
pub fn render_bar(theta: f64, size: usize) -> Vec<f64> {
    let mut img = vec![0.0; size * size];
    let c = size as f64 / 2.0;
    let r = 0.4 * size as f64;
    let (dx, dy) = (r * theta.cos(), r * theta.sin());
    raster::draw_segment(&mut img, size, (c - dx, c - dy), (c + dx, c + dy), 0.75);
    img
}

pub fn angle_code(theta: f64) -> [f64; 2] {
    [(2.0 * theta).cos(), (2.0 * theta).sin()]
}

/// Angle in `[0, π)` decoded from a (possibly noisy) angle code.
pub fn angle_from_code(code: &[f64]) -> f64 {
    (0.5 * code[1].atan2(code[0])).rem_euclid(PI)
}

pub fn make_synthetic_bars(
    count: usize,
    image_size: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<MultimodalDataset> {
    make_synthetic_bars_views(count, image_size, noise_sd, 1, seed)
}

/// Like [`make_synthetic_bars`] with `views` independently-noised angle
/// modalities, named `angle`, `angle2`, `angle3`, ...
pub fn make_synthetic_bars_views(
    count: usize,
    image_size: usize,
    noise_sd: f64,
    views: usize,
    seed: u64,
) -> Result<MultimodalDataset> {
    if image_size < 8 {
        return Err(Error::contract(
            "bar images need a side of at least 8 pixels",
        ));
    }
    if count == 0 || views == 0 {
        return Err(Error::contract(
            "need at least one sample and one angle view",
        ));
    }
    let mut rng = SplitRng::new(seed);
    let thetas: Vec<f64> = (0..count).map(|_| rng.uniform_range(0.0, PI)).collect();
    let mut images = Vec::with_capacity(count * image_size * image_size);
    for &t in &thetas {
        images.extend(render_bar(t, image_size));
    }
    let mut names = vec![IMAGE.to_string()];
    let mut mods = vec![Tensor::new(vec![count, image_size * image_size], images)?];
    for v in 0..views {
        let mut codes = Vec::with_capacity(2 * count);
        for &t in &thetas {
            let [a, b] = angle_code(t);
            codes.push(a + noise_sd * rng.normal());
            codes.push(b + noise_sd * rng.normal());
        }
        names.push(if v == 0 {
            ANGLE.to_string()
        } else {
            format!("{ANGLE}{}", v + 1)
        });
        mods.push(Tensor::new(vec![count, 2], codes)?);
    }
    MultimodalDataset::new(names, mods, Split::Train, Some(thetas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_and_vertical_codes() {
        let [a, b] = angle_code(0.0);
        assert!((a - 1.0).abs() < 1e-15 && b.abs() < 1e-15);
        let [a, b] = angle_code(PI / 2.0);
        assert!((a + 1.0).abs() < 1e-15 && b.abs() < 1e-15);
    }

    #[test]
    fn rendered_bar_orientation_matches() {
        for k in 0..12 {
            let t = k as f64 * PI / 12.0;
            let img = render_bar(t, 16);
            let est = raster::orientation(&img, 16).unwrap();
            assert!(raster::orientation_gap(est, t) < 0.05, "{t} {est}");
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let a = make_synthetic_bars(20, 8, 0.05, 1).unwrap();
        assert_eq!(a, make_synthetic_bars(20, 8, 0.05, 1).unwrap());
        assert_ne!(a, make_synthetic_bars(20, 8, 0.05, 2).unwrap());
        assert!(make_synthetic_bars(20, 7, 0.05, 1).is_err());
    }
}
