//! Image and geometry primitives shared across the pipeline.
//!
//! Every raster type is a row-major grid of `f64` with its own value-range
//! invariant, checked at construction. Crate-internal code that produces
//! values already known to satisfy the invariant goes through
//! `from_raw_unchecked`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! raster_type {
    ($(#[$meta:meta])* $name:ident, $valid:expr, $clamp:expr, $range:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<f64>,
        }

        impl $name {
            pub fn new(width: usize, height: usize, data: Vec<f64>) -> $crate::error::Result<Self> {
                if data.len() != width * height {
                    return Err($crate::error::Error::Dimension(format!(
                        "{} data length {} != {}x{}",
                        stringify!($name),
                        data.len(),
                        width,
                        height
                    )));
                }
                let valid: fn(f64) -> bool = $valid;
                if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !valid(**v)) {
                    return Err($crate::error::Error::Value(format!(
                        "{} value {} at index {} outside {}",
                        stringify!($name),
                        v,
                        i,
                        $range
                    )));
                }
                Ok(Self { width, height, data })
            }

            pub fn filled(width: usize, height: usize, value: f64) -> $crate::error::Result<Self> {
                Self::new(width, height, vec![value; width * height])
            }

            pub fn from_fn(
                width: usize,
                height: usize,
                mut f: impl FnMut(usize, usize) -> f64,
            ) -> $crate::error::Result<Self> {
                let mut data = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(x, y));
                    }
                }
                Self::new(width, height, data)
            }

            #[allow(dead_code)]
            pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
                debug_assert_eq!(data.len(), width * height);
                Self { width, height, data }
            }

            #[inline]
            pub fn width(&self) -> usize {
                self.width
            }

            #[inline]
            pub fn height(&self) -> usize {
                self.height
            }

            #[inline]
            pub fn dims(&self) -> (usize, usize) {
                (self.width, self.height)
            }

            #[inline]
            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn into_data(self) -> Vec<f64> {
                self.data
            }

            /// Value at column `x`, row `y`.
            #[inline]
            pub fn get(&self, x: usize, y: usize) -> f64 {
                self.data[y * self.width + x]
            }

            pub fn sum(&self) -> f64 {
                self.data.iter().sum()
            }

            pub fn max_value(&self) -> f64 {
                self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }

            #[allow(dead_code)]
            pub(crate) fn ensure_same_dims(&self, other: (usize, usize), what: &str) -> $crate::error::Result<()> {
                if self.dims() != other {
                    return Err($crate::error::dim_err(what, self.dims(), other));
                }
                Ok(())
            }
        }

        impl $crate::image::Raster for $name {
            fn dims(&self) -> (usize, usize) {
                (self.width, self.height)
            }
            fn data(&self) -> &[f64] {
                &self.data
            }
            fn rebuild(&self, data: Vec<f64>) -> Self {
                let clamp: fn(f64) -> f64 = $clamp;
                let data = data.into_iter().map(clamp).collect();
                Self::from_raw_unchecked(self.width, self.height, data)
            }
        }
    };
}

pub(crate) use raster_type;

/// Row-major scalar raster whose values live in a closed range.
pub trait Raster: Sized {
    fn dims(&self) -> (usize, usize);
    fn data(&self) -> &[f64];
    /// Same-sized raster from new samples, clamped into the type's range.
    fn rebuild(&self, data: Vec<f64>) -> Self;
}

raster_type!(
    /// Grayscale intensities in `[0, 1]`.
    GrayImage,
    |v| (0.0..=1.0).contains(&v),
    |v| v.clamp(0.0, 1.0),
    "[0, 1]"
);

raster_type!(
    /// Signed tactile-minus-reference intensity differences in `[-1, 1]`.
    DiffImage,
    |v| (-1.0..=1.0).contains(&v),
    |v| v.clamp(-1.0, 1.0),
    "[-1, 1]"
);

raster_type!(
    /// Indentation depth in millimeters; 0 is the undeformed surface.
    DepthMap,
    |v| v.is_finite() && v >= 0.0,
    |v| v.max(0.0),
    "[0, inf)"
);

impl DiffImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::from_raw_unchecked(width, height, vec![0.0; width * height])
    }
}

impl DepthMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::from_raw_unchecked(width, height, vec![0.0; width * height])
    }
}

/// Three-channel image with each channel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    /// Builds an image from three separate channel planes.
    pub fn from_channels(
        width: usize,
        height: usize,
        red: &[f64],
        green: &[f64],
        blue: &[f64],
    ) -> Result<Self> {
        let n = width * height;
        for (name, c) in [("red", red), ("green", green), ("blue", blue)] {
            if c.len() != n {
                return Err(Error::Dimension(format!(
                    "{name} channel has {} samples, expected {width}x{height}",
                    c.len()
                )));
            }
        }
        let data: Vec<[f64; 3]> = (0..n).map(|i| [red[i], green[i], blue[i]]).collect();
        Self::new(width, height, data)
    }

    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "RgbImage data length {} != {width}x{height}",
                data.len()
            )));
        }
        if data.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Value("RgbImage channel outside [0, 1]".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }
}

/// Luminance with BT.601 weights.
pub fn to_grayscale(rgb: &RgbImage) -> GrayImage {
    let data = rgb
        .data
        .iter()
        .map(|[r, g, b]| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
        .collect();
    GrayImage::from_raw_unchecked(rgb.width, rgb.height, data)
}

/// Physical length on the sensing surface covered by one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PixelScale(f64);

impl PixelScale {
    /// 24 mm sensing width over the 460 px cropped image.
    pub const DEFAULT: PixelScale = PixelScale(24.0 / 460.0);

    pub fn new(mm_per_pixel: f64) -> Result<Self> {
        if mm_per_pixel.is_finite() && mm_per_pixel > 0.0 {
            Ok(Self(mm_per_pixel))
        } else {
            Err(Error::Parameter(format!(
                "mm_per_pixel must be positive, got {mm_per_pixel}"
            )))
        }
    }

    #[inline]
    pub fn mm_per_pixel(self) -> f64 {
        self.0
    }

    /// Area of one pixel in mm².
    #[inline]
    pub fn pixel_area(self) -> f64 {
        self.0 * self.0
    }
}

impl Default for PixelScale {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<f64> for PixelScale {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PixelScale> for f64 {
    fn from(s: PixelScale) -> f64 {
        s.0
    }
}

/// 6D force/torque: forces in N, torques in N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Wrench {
    pub const COMPONENTS: [&'static str; 6] = ["fx", "fy", "fz", "tx", "ty", "tz"];

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { fx: a[0], fy: a[1], fz: a[2], tx: a[3], ty: a[4], tz: a[5] }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.fx, self.fy, self.fz, self.tx, self.ty, self.tz]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Samples `data` (row-major, `width`x`height`) at a sub-pixel location.
/// Neighbors outside the grid contribute zero.
pub(crate) fn bilinear_zero(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    if !(x > -1.0 && y > -1.0 && x < width as f64 && y < height as f64) {
        return 0.0;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |xi: isize, yi: isize| -> f64 {
        if xi < 0 || yi < 0 || xi >= width as isize || yi >= height as isize {
            0.0
        } else {
            data[yi as usize * width + xi as usize]
        }
    };
    let top = if fx == 0.0 { at(x0, y0) } else { at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 {
        at(x0, y0 + 1)
    } else {
        at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx
    };
    top * (1.0 - fy) + bottom * fy
}

/// Like [`bilinear_zero`] but clamps coordinates to the grid.
pub(crate) fn bilinear_clamped(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    bilinear_zero(data, width, height, x, y)
}
