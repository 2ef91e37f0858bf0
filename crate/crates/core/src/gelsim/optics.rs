use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::GrayImage;

use super::{GelSpec, ThicknessField};

/// Mean intensity of the synthetic no-contact frame.
pub const REFERENCE_MEAN: f64 = 0.75;
/// Amplitude of its low-frequency illumination variation.
pub const REFERENCE_RIPPLE: f64 = 0.05;

/// No-contact frame: `0.75 ± 0.05` with a smooth, seeded illumination
/// pattern.
pub fn reference_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p1, p2): (f64, f64) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let (fx, fy) = (rng.random_range(0.5..1.0), rng.random_range(0.5..1.0));
    let data = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let u = x as f64 / width.max(1) as f64;
            let v = y as f64 / height.max(1) as f64;
            let ripple = 0.5 * (2.0 * PI * fx * u + p1).sin() + 0.5 * (2.0 * PI * fy * v + p2).cos();
            REFERENCE_MEAN + REFERENCE_RIPPLE * ripple
        })
        .collect();
    GrayImage::from_raw_unchecked(width, height, data)
}

/// Thinner gel darkens, thicker gel brightens, relative to `reference`.
pub fn render(thickness: &ThicknessField, reference: &GrayImage, gel: &GelSpec) -> Result<GrayImage> {
    if thickness.dims() != reference.dims() {
        return Err(Error::Dimension(format!(
            "thickness {:?} vs reference {:?}",
            thickness.dims(),
            reference.dims()
        )));
    }
    let o = &gel.optics;
    let data = thickness
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&t, &r)| {
            let v = if t < gel.h0 {
                r - o.darkening(gel.h0 - t)
            } else if t > gel.h0 {
                r + o.brightening(t - gel.h0)
            } else {
                r
            };
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok(GrayImage::from_raw_unchecked(thickness.width(), thickness.height(), data))
}

/// Additive Gaussian pixel noise, clamped to `[0, 1]`.
pub fn add_noise(img: &GrayImage, std: f64, rng: &mut impl Rng) -> Result<GrayImage> {
    let normal = Normal::new(0.0, std)
        .map_err(|e| Error::Parameter(format!("noise std {std}: {e}")))?;
    let data = img.data().iter().map(|&v| (v + normal.sample(rng)).clamp(0.0, 1.0)).collect();
    Ok(GrayImage::from_raw_unchecked(img.width(), img.height(), data))
}
