//! Shape reconstruction: difference image, depth lookup, two Gaussian
//! passes, point cloud; and the sphere-press accuracy evaluation.

use serde::{Deserialize, Serialize};

use crate::blob::{largest_contact, ContactCircle};
use crate::calib::{lookup_depth, IntensityDepthTable};
use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::image::{DepthMap, DiffImage, GrayImage, PixelScale};

/// Signed `tactile - reference`: negative where the gel is pressed,
/// positive over bulges.
pub fn difference(reference: &GrayImage, tactile: &GrayImage) -> Result<DiffImage> {
    reference.ensure_same_dims(tactile.dims(), "difference")?;
    let data = tactile.data().iter().zip(reference.data()).map(|(t, r)| t - r).collect();
    Ok(DiffImage::from_raw_unchecked(reference.width(), reference.height(), data))
}

/// Smoothing applied after the depth lookup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconParams {
    pub sigma1: f64,
    pub radius1: usize,
    pub sigma2: f64,
    pub radius2: usize,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self { sigma1: 2.0, radius1: 5, sigma2: 1.0, radius2: 2 }
    }
}

/// Per-pixel table lookup of the intensity drop, before smoothing. Bulge
/// pixels (positive difference) map to zero depth.
pub fn lookup_depth_map(diff: &DiffImage, table: &IntensityDepthTable) -> DepthMap {
    let data = diff.data().iter().map(|&d| lookup_depth(table, -d)).collect();
    DepthMap::from_raw_unchecked(diff.width(), diff.height(), data)
}

pub fn reconstruct(
    diff: &DiffImage,
    table: &IntensityDepthTable,
    params: &ReconParams,
) -> Result<DepthMap> {
    let raw = lookup_depth_map(diff, table);
    let once = gaussian_blur(&raw, params.sigma1, params.radius1)?;
    gaussian_blur(&once, params.sigma2, params.radius2)
}

/// Points in millimeters, sensor frame: origin at the image center, z into
/// the gel. One point per pixel in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    /// Rebuilds the depth map from point order (inverse of
    /// [`to_pointcloud`]).
    pub fn to_depth_map(&self, width: usize, height: usize) -> Result<DepthMap> {
        DepthMap::new(width, height, self.points.iter().map(|p| p[2]).collect())
    }
}

pub fn to_pointcloud(depth: &DepthMap, scale: PixelScale) -> PointCloud {
    let s = scale.mm_per_pixel();
    let (w, h) = depth.dims();
    let (hw, hh) = (w as f64 / 2.0, h as f64 / 2.0);
    let points = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| [(x as f64 - hw) * s, (y as f64 - hh) * s, depth.get(x, y)])
        .collect();
    PointCloud { points }
}

/// Contact circle of a press, found on the tactile/reference difference.
pub fn detect_press_circle(
    reference: &GrayImage,
    tactile: &GrayImage,
    threshold: f64,
) -> Result<Option<ContactCircle>> {
    largest_contact(&difference(reference, tactile)?, threshold)
}

/// Depth of a ball of radius `ball_radius` (mm) whose contact disk has
/// radius `contact_radius` (mm), at distance `r` (mm) from the disk center.
/// Zero outside the disk.
pub fn ball_depth(ball_radius: f64, contact_radius: f64, r: f64) -> f64 {
    if r >= contact_radius {
        return 0.0;
    }
    let d0 = ball_radius - (ball_radius * ball_radius - contact_radius * contact_radius).sqrt();
    ((ball_radius * ball_radius - r * r).sqrt() - (ball_radius - d0)).max(0.0)
}

/// One reconstructed ball press with its detected contact circle.
#[derive(Debug, Clone)]
pub struct SpherePress {
    pub depth: DepthMap,
    pub ball_radius_mm: f64,
    pub circle: Option<ContactCircle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub mae_mm: f64,
    pub std_mm: f64,
    pub n_images: usize,
    pub n_pixels: usize,
    /// Indices of presses whose circle was missing or inconsistent.
    #[serde(default)]
    pub excluded: Vec<usize>,
}

/// MAE and standard deviation of the absolute depth error over the pixels
/// inside each press's contact disk, against the analytic ball surface.
pub fn eval_sphere_presses(presses: &[SpherePress], scale: PixelScale) -> Result<ReconReport> {
    let s = scale.mm_per_pixel();
    let mut errors = Vec::new();
    let mut excluded = Vec::new();
    let mut n_images = 0;
    for (idx, press) in presses.iter().enumerate() {
        let Some(c) = press.circle else {
            excluded.push(idx);
            continue;
        };
        let a = c.radius * s;
        if !(a < press.ball_radius_mm) {
            excluded.push(idx);
            continue;
        }
        n_images += 1;
        let (w, h) = press.depth.dims();
        for y in 0..h {
            for x in 0..w {
                let r = (x as f64 - c.cx).hypot(y as f64 - c.cy) * s;
                if r < a {
                    let truth = ball_depth(press.ball_radius_mm, a, r);
                    errors.push((press.depth.get(x, y) - truth).abs());
                }
            }
        }
    }
    if errors.is_empty() {
        return Err(Error::Evaluation("no press had a usable contact circle".into()));
    }
    let n = errors.len() as f64;
    let mae = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mae).powi(2)).sum::<f64>() / n;
    Ok(ReconReport { mae_mm: mae, std_mm: var.sqrt(), n_images, n_pixels: errors.len(), excluded })
}
