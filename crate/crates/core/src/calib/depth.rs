use serde::{Deserialize, Serialize};

use crate::blob::largest_contact;
use crate::error::{Error, Result};
use crate::image::{DiffImage, GrayImage, PixelScale};

/// Monotone lookup from intensity drop to indentation depth.
///
/// Bin `k` is centered on drop `k * bin_width`; `depths[0]` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct IntensityDepthTable {
    bin_width: f64,
    depths: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    bin_width: f64,
    depths: Vec<f64>,
}

impl TryFrom<TableRepr> for IntensityDepthTable {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        Self::new(r.bin_width, r.depths)
    }
}

impl From<IntensityDepthTable> for TableRepr {
    fn from(t: IntensityDepthTable) -> Self {
        TableRepr { bin_width: t.bin_width, depths: t.depths }
    }
}

impl IntensityDepthTable {
    pub fn new(bin_width: f64, depths: Vec<f64>) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::Parameter(format!("bin width must be positive, got {bin_width}")));
        }
        if depths.first() != Some(&0.0) {
            return Err(Error::Value("depth table must start at 0".into()));
        }
        if depths.iter().any(|d| !d.is_finite() || *d < 0.0) || depths.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::Value("depth table must be finite and non-decreasing".into()));
        }
        Ok(Self { bin_width, depths })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    /// Drop at the center of the last bin.
    pub fn max_drop(&self) -> f64 {
        (self.depths.len() - 1) as f64 * self.bin_width
    }

    pub fn max_depth(&self) -> f64 {
        *self.depths.last().unwrap()
    }

    pub fn lookup(&self, drop: f64) -> f64 {
        lookup_depth(self, drop)
    }
}

/// Linear interpolation between bin centers, 0 for non-positive drops and
/// the deepest entry beyond `max_drop`.
pub fn lookup_depth(table: &IntensityDepthTable, drop: f64) -> f64 {
    if !(drop > 0.0) {
        return 0.0;
    }
    if drop >= table.max_drop() {
        return table.max_depth();
    }
    let pos = drop / table.bin_width;
    let k = (pos.floor() as usize).min(table.depths.len() - 2);
    let t = pos - k as f64;
    table.depths[k] + t * (table.depths[k + 1] - table.depths[k])
}

/// Weighted pool-adjacent-violators: the non-decreasing sequence closest to
/// `values` in weighted least squares.
pub fn isotonic_non_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let wt = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / wt, wt, n1 + n2);
        }
    }
    blocks.iter().flat_map(|&(m, _, n)| std::iter::repeat_n(m, n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthCalibOptions {
    /// Calibration ball radius, mm.
    pub ball_radius_mm: f64,
    /// Intensity width of one table bin.
    pub bin_width: f64,
    /// Drop above which a pixel counts as contact when locating the ball.
    pub contact_threshold: f64,
}

impl Default for DepthCalibOptions {
    fn default() -> Self {
        Self { ball_radius_mm: 4.0, bin_width: 1.0 / 255.0, contact_threshold: 0.5 / 255.0 }
    }
}

/// Single-image calibration from one press of a ball of known radius.
///
/// The contact disk's radius fixes the indentation of the ball, which gives
/// an analytic depth for every pixel inside the disk. Pixels are binned by
/// intensity drop, bins are averaged, made monotone by isotonic regression,
/// and empty bins are filled by linear interpolation.
pub fn calibrate_depth(
    reference: &GrayImage,
    ball_press: &GrayImage,
    scale: PixelScale,
    opts: &DepthCalibOptions,
) -> Result<IntensityDepthTable> {
    if reference.dims() != ball_press.dims() {
        return Err(Error::Dimension("reference and ball press differ in size".into()));
    }
    if !(opts.bin_width > 0.0 && opts.ball_radius_mm > 0.0) {
        return Err(Error::Parameter("bin width and ball radius must be positive".into()));
    }
    let (w, h) = reference.dims();
    let drops: Vec<f64> = reference
        .data()
        .iter()
        .zip(ball_press.data())
        .map(|(r, t)| r - t)
        .collect();
    let diff = DiffImage::new(w, h, drops.iter().map(|d| -d).collect())?;
    let circle = largest_contact(&diff, opts.contact_threshold)?
        .ok_or_else(|| Error::Calibration("no contact found in calibration image".into()))?;

    let s = scale.mm_per_pixel();
    let big_r = opts.ball_radius_mm;
    let a = circle.radius * s;
    if a >= big_r {
        return Err(Error::Geometry(format!(
            "contact radius {a:.3} mm is not smaller than ball radius {big_r} mm"
        )));
    }
    let d0 = big_r - (big_r * big_r - a * a).sqrt();

    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let r = (x as f64 - circle.cx).hypot(y as f64 - circle.cy) * s;
            if r >= a {
                continue;
            }
            let depth = (big_r * big_r - r * r).sqrt() - (big_r - d0);
            let drop = drops[y * w + x];
            let k = (drop / opts.bin_width).round().max(0.0) as usize;
            if k >= sums.len() {
                sums.resize(k + 1, 0.0);
                counts.resize(k + 1, 0);
            }
            sums[k] += depth;
            counts[k] += 1;
        }
    }
    if sums.len() < 2 {
        return Err(Error::Calibration("contact produced no measurable intensity drop".into()));
    }

    let populated: Vec<usize> = (1..sums.len()).filter(|&k| counts[k] > 0).collect();
    let means: Vec<f64> = populated.iter().map(|&k| sums[k] / counts[k] as f64).collect();
    let weights: Vec<f64> = populated.iter().map(|&k| counts[k] as f64).collect();
    let fitted = isotonic_non_decreasing(&means, &weights);

    let mut depths = vec![f64::NAN; sums.len()];
    depths[0] = 0.0;
    for (&k, &d) in populated.iter().zip(&fitted) {
        depths[k] = d.max(0.0);
    }
    // interpolate gaps between populated bins
    let mut last = 0;
    for k in 1..depths.len() {
        if depths[k].is_nan() {
            continue;
        }
        for g in last + 1..k {
            let t = (g - last) as f64 / (k - last) as f64;
            depths[g] = depths[last] + t * (depths[k] - depths[last]);
        }
        last = k;
    }
    IntensityDepthTable::new(opts.bin_width, depths)
}
