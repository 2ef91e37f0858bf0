//! Regressor input: 4:3 aspect pad, area-average downsampling, and the
//! planar 3-channel tensor.

use crate::deform::DeformationTriple;
use crate::error::{len_err, Error, Result};
use crate::image::GrayImage;

pub const INPUT_WIDTH: usize = 80;
pub const INPUT_HEIGHT: usize = 60;
pub const INPUT_CHANNELS: usize = 3;

/// Fixed per-channel input gains (darker, brighter, reference). The flow
/// bulge is an order of magnitude fainter than the contact signal, so it is
/// amplified to a comparable range.
pub const CHANNEL_GAIN: [f64; 3] = [20.0, 1000.0, 1.0];

/// Planar `[channel][row][col]` input of the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl InputTensor {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension("input tensor must be non-empty".into()));
        }
        if data.len() != INPUT_CHANNELS * width * height {
            return Err(len_err("input tensor", data.len(), INPUT_CHANNELS * width * height));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Gained channels of a triple already at the target resolution.
    pub fn from_triple(triple: &DeformationTriple) -> Result<Self> {
        let (w, h) = triple.dims();
        let mut data = Vec::with_capacity(INPUT_CHANNELS * w * h);
        for (img, gain) in [&triple.darker, &triple.brighter, &triple.reference].iter().zip(CHANNEL_GAIN) {
            data.extend(img.data().iter().map(|&v| (v * gain) as f32));
        }
        Self::new(w, h, data)
    }
}

/// Zero-pads symmetrically to the `aw:ah` aspect ratio.
pub fn pad_to_aspect(data: &[f64], w: usize, h: usize, aw: usize, ah: usize) -> (Vec<f64>, usize, usize) {
    // smallest (pw, ph) >= (w, h) with pw * ah == ph * aw, up to rounding
    let (pw, ph) = if w * ah >= h * aw {
        (w, (w * ah).div_ceil(aw))
    } else {
        ((h * aw).div_ceil(ah), h)
    };
    if (pw, ph) == (w, h) {
        return (data.to_vec(), w, h);
    }
    let (ox, oy) = ((pw - w) / 2, (ph - h) / 2);
    let mut out = vec![0.0; pw * ph];
    for y in 0..h {
        out[(y + oy) * pw + ox..(y + oy) * pw + ox + w].copy_from_slice(&data[y * w..(y + 1) * w]);
    }
    (out, pw, ph)
}

/// Weights of each source index over each of `n_out` equal output cells.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let step = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let (lo, hi) = (o as f64 * step, (o + 1) as f64 * step);
            let mut ws = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < n_in {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    ws.push((i, overlap / step));
                }
                i += 1;
            }
            ws
        })
        .collect()
}

/// Exact area-average resampling (each output pixel is the mean of the
/// source area it covers).
pub fn area_resample(data: &[f64], w: usize, h: usize, ow: usize, oh: usize) -> Result<Vec<f64>> {
    if data.len() != w * h {
        return Err(len_err("resample source", data.len(), w * h));
    }
    if ow == 0 || oh == 0 || w == 0 || h == 0 {
        return Err(Error::Dimension("resample sizes must be positive".into()));
    }
    let wx = area_weights(w, ow);
    let wy = area_weights(h, oh);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for (ox, ws) in wx.iter().enumerate() {
            rows[y * ow + ox] = ws.iter().map(|&(x, k)| k * data[y * w + x]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for (oy, ws) in wy.iter().enumerate() {
        for ox in 0..ow {
            out[oy * ow + ox] = ws.iter().map(|&(y, k)| k * rows[y * ow + ox]).sum();
        }
    }
    Ok(out)
}

fn shrink(img: &GrayImage, ow: usize, oh: usize) -> Result<GrayImage> {
    let (padded, pw, ph) = pad_to_aspect(img.data(), img.width(), img.height(), ow, oh);
    let data = area_resample(&padded, pw, ph, ow, oh)?;
    // averaging keeps values in range up to rounding
    GrayImage::new(ow, oh, data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Pads every channel to the output aspect and area-averages it down.
pub fn downsample_triple(triple: &DeformationTriple, ow: usize, oh: usize) -> Result<DeformationTriple> {
    Ok(DeformationTriple {
        darker: shrink(&triple.darker, ow, oh)?,
        brighter: shrink(&triple.brighter, ow, oh)?,
        reference: shrink(&triple.reference, ow, oh)?,
    })
}
