use crate::error::{Error, Result};
use crate::image::{bilinear_zero, GrayImage};

/// Radial lens model `r_d = r (1 + k1 r² + k2 r⁴)`, with `r` normalized by
/// the image half-diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialDistortion {
    pub k1: f64,
    pub k2: f64,
    pub center: [f64; 2],
    half_diagonal: f64,
    max_radius: f64,
}

impl RadialDistortion {
    pub fn new(k1: f64, k2: f64, center: [f64; 2], dims: (usize, usize)) -> Result<Self> {
        let (w, h) = (dims.0 as f64, dims.1 as f64);
        let half_diagonal = (w * w + h * h).sqrt() / 2.0;
        let max_radius = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(x, y)| (x - center[0]).hypot(y - center[1]) / half_diagonal)
            .fold(0.0, f64::max);
        let model = Self { k1, k2, center, half_diagonal, max_radius };
        if !(k1.is_finite() && k2.is_finite()) {
            return Err(Error::Parameter("distortion coefficients must be finite".into()));
        }
        // r (1 + k1 r² + k2 r⁴) must stay strictly increasing over the image
        let steps = 1000;
        for i in 0..=steps {
            let r = max_radius * i as f64 / steps as f64;
            let r2 = r * r;
            if 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2 <= 0.0 {
                return Err(Error::Parameter(format!(
                    "distortion k1={k1}, k2={k2} is not invertible over the image"
                )));
            }
        }
        Ok(model)
    }

    fn factor(&self, r: f64) -> f64 {
        let r2 = r * r;
        1.0 + self.k1 * r2 + self.k2 * r2 * r2
    }

    /// Where the distorted image samples its source for output pixel `p`.
    pub fn source_of(&self, p: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let f = self.factor(dx.hypot(dy) / self.half_diagonal);
        [self.center[0] + dx * f, self.center[1] + dy * f]
    }

    /// Where a source point `q` appears in the distorted image; inverse of
    /// [`RadialDistortion::source_of`] by Newton iteration.
    pub fn image_of(&self, q: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (q[0] - self.center[0], q[1] - self.center[1]);
        let rq = dx.hypot(dy) / self.half_diagonal;
        if rq == 0.0 {
            return q;
        }
        let mut r = rq;
        for _ in 0..50 {
            let r2 = r * r;
            let g = r * self.factor(r) - rq;
            let dg = 1.0 + 3.0 * self.k1 * r2 + 5.0 * self.k2 * r2 * r2;
            let step = g / dg;
            r -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let m = r / rq;
        [self.center[0] + dx * m, self.center[1] + dy * m]
    }

    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }
}

/// Inverse-warps `img` through the radial model with bilinear sampling;
/// samples falling outside the image are 0.
pub fn apply_distortion(img: &GrayImage, k1: f64, k2: f64, center: [f64; 2]) -> Result<GrayImage> {
    let model = RadialDistortion::new(k1, k2, center, img.dims())?;
    if k1 == 0.0 && k2 == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let [sx, sy] = model.source_of([x as f64, y as f64]);
            data.push(bilinear_zero(img.data(), w, h, sx, sy).clamp(0.0, 1.0));
        }
    }
    Ok(GrayImage::from_raw_unchecked(w, h, data))
}
