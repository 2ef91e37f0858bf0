use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob::Blob;
use crate::error::{Error, Result};
use crate::image::{bilinear_zero, GrayImage, PixelScale};
use crate::io;

/// Layout of the cylinder-array calibration board.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Center-to-center distance of neighboring cylinders, mm.
    pub spacing_mm: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 5, cols: 5, spacing_mm: 2.0 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 3 || self.cols < 3 || !(self.spacing_mm > 0.0) {
            return Err(Error::Parameter(format!("invalid grid {self:?}")));
        }
        Ok(())
    }

    fn center_index(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }
}

/// Equidistant target grid: marker `(row, col)` sits at
/// `center + (col - c0) * (a, b) + (row - r0) * (-b, a)`, i.e. a square
/// lattice of pitch `hypot(a, b)` rotated by `atan2(b, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
    pub center_index: [usize; 2],
}

impl GridModel {
    pub fn position(&self, row: usize, col: usize) -> [f64; 2] {
        let di = row as f64 - self.center_index[0] as f64;
        let dj = col as f64 - self.center_index[1] as f64;
        [
            self.center[0] + self.a * dj - self.b * di,
            self.center[1] + self.b * dj + self.a * di,
        ]
    }

    /// Pixel distance between neighboring markers.
    pub fn pitch(&self) -> f64 {
        self.a.hypot(self.b)
    }

    /// Least-squares fit to `(row, col, x, y)` observations.
    fn fit(points: &[(usize, usize, [f64; 2])], center_index: (usize, usize)) -> Result<Self> {
        // unknowns: cx, cy, a, b
        let mut ata = [[0.0f64; 4]; 4];
        let mut atb = [0.0f64; 4];
        for &(i, j, [x, y]) in points {
            let di = i as f64 - center_index.0 as f64;
            let dj = j as f64 - center_index.1 as f64;
            for (row, rhs) in [([1.0, 0.0, dj, -di], x), ([0.0, 1.0, di, dj], y)] {
                for r in 0..4 {
                    for c in 0..4 {
                        ata[r][c] += row[r] * row[c];
                    }
                    atb[r] += row[r] * rhs;
                }
            }
        }
        let sol = solve4(ata, atb)
            .ok_or_else(|| Error::Calibration("singular anchor system".into()))?;
        Ok(Self {
            center: [sol[0], sol[1]],
            a: sol[2],
            b: sol[3],
            center_index: [center_index.0, center_index.1],
        })
    }
}

fn solve4(mut m: [[f64; 4]; 4], mut v: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
            v[r] -= f * v[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|c| m[r][c] * x[c]).sum();
        x[r] = (v[r] - s) / m[r][r];
    }
    Some(x)
}

/// Per-output-pixel source coordinates in the raw image frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapField {
    pub raw_width: usize,
    pub raw_height: usize,
    pub out_width: usize,
    pub out_height: usize,
    /// Raw-frame position of output pixel (0, 0).
    pub crop_origin: [usize; 2],
    pub map_x: Vec<f64>,
    pub map_y: Vec<f64>,
    /// Target lattice the markers were rectified onto, if fitted.
    pub grid: Option<GridModel>,
}

/// JSON sidecar stored next to the two PFM coordinate maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemapHeader {
    pub raw_size: [usize; 2],
    pub out_size: [usize; 2],
    pub crop_origin: [usize; 2],
    pub mm_per_pixel: f64,
    pub map_x: String,
    pub map_y: String,
    #[serde(default)]
    pub grid: Option<GridModel>,
}

fn centered_crop(raw: (usize, usize), out: (usize, usize)) -> Result<[usize; 2]> {
    if out.0 > raw.0 || out.1 > raw.1 || out.0 == 0 || out.1 == 0 {
        return Err(Error::Parameter(format!("cannot crop {raw:?} to {out:?}")));
    }
    Ok([(raw.0 - out.0) / 2, (raw.1 - out.1) / 2])
}

impl RemapField {
    /// Plain center crop.
    pub fn identity(raw: (usize, usize), out: (usize, usize)) -> Result<Self> {
        let origin = centered_crop(raw, out)?;
        let mut map_x = Vec::with_capacity(out.0 * out.1);
        let mut map_y = Vec::with_capacity(out.0 * out.1);
        for y in 0..out.1 {
            for x in 0..out.0 {
                map_x.push((origin[0] + x) as f64);
                map_y.push((origin[1] + y) as f64);
            }
        }
        Ok(Self {
            raw_width: raw.0,
            raw_height: raw.1,
            out_width: out.0,
            out_height: out.1,
            crop_origin: origin,
            map_x,
            map_y,
            grid: None,
        })
    }

    pub fn source(&self, x: usize, y: usize) -> [f64; 2] {
        let i = y * self.out_width + x;
        [self.map_x[i], self.map_y[i]]
    }

    /// Writes `remap.json`, `remap_x.pfm` and `remap_y.pfm` into `dir`.
    pub fn save(&self, dir: &Path, scale: PixelScale) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::save_pfm(dir.join("remap_x.pfm"), self.out_width, self.out_height, &self.map_x)?;
        io::save_pfm(dir.join("remap_y.pfm"), self.out_width, self.out_height, &self.map_y)?;
        let header = RemapHeader {
            raw_size: [self.raw_width, self.raw_height],
            out_size: [self.out_width, self.out_height],
            crop_origin: self.crop_origin,
            mm_per_pixel: scale.mm_per_pixel(),
            map_x: "remap_x.pfm".into(),
            map_y: "remap_y.pfm".into(),
            grid: self.grid,
        };
        fs::write(dir.join("remap.json"), serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    /// Reads a remap written by [`RemapField::save`].
    pub fn load(header_path: &Path) -> Result<(Self, PixelScale)> {
        let header: RemapHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
        let dir = header_path.parent().unwrap_or(Path::new("."));
        let (wx, hx, map_x) = io::load_pfm(dir.join(&header.map_x))?;
        let (wy, hy, map_y) = io::load_pfm(dir.join(&header.map_y))?;
        let out = (header.out_size[0], header.out_size[1]);
        if (wx, hx) != out || (wy, hy) != out {
            return Err(Error::Dimension("remap maps do not match header out_size".into()));
        }
        Ok((
            Self {
                raw_width: header.raw_size[0],
                raw_height: header.raw_size[1],
                out_width: out.0,
                out_height: out.1,
                crop_origin: header.crop_origin,
                map_x,
                map_y,
                grid: header.grid,
            },
            PixelScale::new(header.mm_per_pixel)?,
        ))
    }
}

/// Row-major assignment: sort by y, cut into rows of `cols`, sort each row
/// by x.
fn assign_markers(markers: &[Blob], grid: &GridSpec) -> Vec<(usize, usize, [f64; 2])> {
    let mut pts: Vec<[f64; 2]> = markers.iter().map(|b| [b.x, b.y]).collect();
    pts.sort_by(|p, q| p[1].total_cmp(&q[1]));
    let mut out = Vec::with_capacity(pts.len());
    for (i, row) in pts.chunks_mut(grid.cols).enumerate() {
        row.sort_by(|p, q| p[0].total_cmp(&q[0]));
        out.extend(row.iter().enumerate().map(|(j, &p)| (i, j, p)));
    }
    out
}

fn check_not_collinear(anchors: &[(usize, usize, [f64; 2])]) -> Result<()> {
    let n = anchors.len() as f64;
    let mx = anchors.iter().map(|a| a.2[0]).sum::<f64>() / n;
    let my = anchors.iter().map(|a| a.2[1]).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for a in anchors {
        let (dx, dy) = (a.2[0] - mx, a.2[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (hi, lo) = (tr / 2.0 + disc, tr / 2.0 - disc);
    if !(hi > 0.0) || lo / hi < 1e-6 {
        return Err(Error::Calibration("anchor markers are collinear".into()));
    }
    Ok(())
}

/// Builds the rectifying remap from detected board markers.
///
/// The five central markers (grid center and its 4-neighbors) fix an
/// equidistant, possibly rotated lattice by least squares; every marker's
/// target is its lattice position. Marker displacements (detected minus
/// target) are spread to all pixels by inverse-distance weighting (power 2)
/// and the result is center-cropped to `out_size`.
pub fn build_remap(
    markers: &[Blob],
    grid: &GridSpec,
    raw_size: (usize, usize),
    out_size: (usize, usize),
) -> Result<(RemapField, PixelScale)> {
    grid.validate()?;
    if markers.len() != grid.rows * grid.cols {
        return Err(Error::Calibration(format!(
            "expected {} markers, detected {}",
            grid.rows * grid.cols,
            markers.len()
        )));
    }
    let origin = centered_crop(raw_size, out_size)?;
    let assigned = assign_markers(markers, grid);
    let (ci, cj) = grid.center_index();
    let anchors: Vec<_> = assigned
        .iter()
        .copied()
        .filter(|&(i, j, _)| {
            (i == ci && j.abs_diff(cj) <= 1) || (j == cj && i.abs_diff(ci) == 1)
        })
        .collect();
    check_not_collinear(&anchors)?;
    let model = GridModel::fit(&anchors, (ci, cj))?;
    if !(model.pitch() > 1e-9) {
        return Err(Error::Calibration("degenerate marker pitch".into()));
    }

    let targets: Vec<([f64; 2], [f64; 2])> = assigned
        .iter()
        .map(|&(i, j, p)| {
            let t = model.position(i, j);
            (t, [p[0] - t[0], p[1] - t[1]])
        })
        .collect();

    let n = out_size.0 * out_size.1;
    let (mut map_x, mut map_y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for y in 0..out_size.1 {
        for x in 0..out_size.0 {
            let q = [(origin[0] + x) as f64, (origin[1] + y) as f64];
            let d = idw_displacement(&targets, q);
            map_x.push(q[0] + d[0]);
            map_y.push(q[1] + d[1]);
        }
    }
    let scale = PixelScale::new(grid.spacing_mm / model.pitch())?;
    Ok((
        RemapField {
            raw_width: raw_size.0,
            raw_height: raw_size.1,
            out_width: out_size.0,
            out_height: out_size.1,
            crop_origin: origin,
            map_x,
            map_y,
            grid: Some(model),
        },
        scale,
    ))
}

fn idw_displacement(targets: &[([f64; 2], [f64; 2])], q: [f64; 2]) -> [f64; 2] {
    let (mut wx, mut wy, mut wsum) = (0.0, 0.0, 0.0);
    for &(t, d) in targets {
        let r2 = (q[0] - t[0]).powi(2) + (q[1] - t[1]).powi(2);
        if r2 < 1e-18 {
            return d;
        }
        let w = 1.0 / r2;
        wx += w * d[0];
        wy += w * d[1];
        wsum += w;
    }
    [wx / wsum, wy / wsum]
}

/// Bilinear resampling of a raw image through `remap`; out-of-range samples
/// are 0.
pub fn rectify(img: &GrayImage, remap: &RemapField) -> Result<GrayImage> {
    if img.dims() != (remap.raw_width, remap.raw_height) {
        return Err(Error::Dimension(format!(
            "image {:?} vs remap raw size {:?}",
            img.dims(),
            (remap.raw_width, remap.raw_height)
        )));
    }
    let (w, h) = img.dims();
    let data = remap
        .map_x
        .iter()
        .zip(&remap.map_y)
        .map(|(&x, &y)| bilinear_zero(img.data(), w, h, x, y).clamp(0.0, 1.0))
        .collect();
    GrayImage::new(remap.out_width, remap.out_height, data)
}
