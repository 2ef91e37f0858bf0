//! Separable Gaussian smoothing with edge replication.

use crate::error::{Error, Result};
use crate::image::Raster;

/// Normalized 1D Gaussian kernel of length `2 * radius + 1`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if radius < 1 {
        return Err(Error::Parameter("kernel radius must be at least 1".into()));
    }
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    Ok(k)
}

/// Convolves horizontally then vertically. Output has the input's dimensions.
pub fn gaussian_blur<R: Raster>(img: &R, sigma: f64, radius: usize) -> Result<R> {
    let kernel = gaussian_kernel(sigma, radius)?;
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Ok(img.rebuild(img.data().to_vec()));
    }
    let src = img.data();
    let r = radius as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in kernel.iter().enumerate() {
                acc += wk * row[clamp(x as isize + k as isize - r, w)];
            }
            horiz[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, wk) in kernel.iter().enumerate() {
            let sy = clamp(y as isize + k as isize - r, h);
            let src_row = &horiz[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += wk * s;
            }
        }
    }
    Ok(img.rebuild(out))
}
