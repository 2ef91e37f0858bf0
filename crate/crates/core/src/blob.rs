//! Threshold + 4-connected component labelling with intensity-weighted
//! centroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::DiffImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Sub-pixel column of the intensity-weighted centroid.
    pub x: f64,
    /// Sub-pixel row of the intensity-weighted centroid.
    pub y: f64,
    /// Pixel count.
    pub area: usize,
    /// Sum of intensity drops over the component.
    pub mass: f64,
}

impl Blob {
    /// Radius of the disk with the same area.
    pub fn equivalent_radius(&self) -> f64 {
        (self.area as f64 / std::f64::consts::PI).sqrt()
    }
}

/// Finds connected regions where the intensity drop (`-diff`) exceeds
/// `threshold`. Components smaller than `min_area` are discarded. Output is
/// sorted by centroid row, then column.
pub fn detect_blobs(diff: &DiffImage, threshold: f64, min_area: usize) -> Result<Vec<Blob>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!(
            "blob threshold must be in (0, 1), got {threshold}"
        )));
    }
    let (w, h) = diff.dims();
    let data = diff.data();
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut blobs = Vec::new();

    for start in 0..w * h {
        if visited[start] || -data[start] <= threshold {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let (mut area, mut mass, mut mx, mut my) = (0usize, 0.0, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let drop = -data[i];
            area += 1;
            mass += drop;
            mx += drop * x as f64;
            my += drop * y as f64;
            let mut visit = |j: usize| {
                if !visited[j] && -data[j] > threshold {
                    visited[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if area >= min_area {
            blobs.push(Blob { x: mx / mass, y: my / mass, area, mass });
        }
    }
    blobs.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    Ok(blobs)
}

/// Circle fitted to the largest super-threshold component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactCircle {
    pub cx: f64,
    pub cy: f64,
    /// Radius in pixels, from the component's area.
    pub radius: f64,
}

pub fn largest_contact(diff: &DiffImage, threshold: f64) -> Result<Option<ContactCircle>> {
    let blobs = detect_blobs(diff, threshold, 1)?;
    Ok(blobs.iter().max_by_key(|b| b.area).map(|b| ContactCircle {
        cx: b.x,
        cy: b.y,
        radius: b.equivalent_radius(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_image(w: usize, h: usize, disks: &[(f64, f64, f64)], drop: f64) -> DiffImage {
        DiffImage::from_fn(w, h, |x, y| {
            let inside = disks.iter().any(|&(cx, cy, r)| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                dx * dx + dy * dy <= r * r
            });
            if inside {
                -drop
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn no_contact_no_blobs() {
        let d = DiffImage::zeros(64, 48);
        assert!(detect_blobs(&d, 0.1, 1).unwrap().is_empty());
    }

    #[test]
    fn single_disk_centroid() {
        let d = disk_image(200, 160, &[(100.0, 80.0, 5.0)], 0.3);
        let blobs = detect_blobs(&d, 0.1, 1).unwrap();
        assert_eq!(blobs.len(), 1);
        assert!((blobs[0].x - 100.0).abs() < 0.1);
        assert!((blobs[0].y - 80.0).abs() < 0.1);
    }

    #[test]
    fn grid_of_disks() {
        let mut centers = Vec::new();
        for r in 0..5 {
            for c in 0..5 {
                centers.push((40.0 + 40.0 * c as f64 + 0.3, 30.0 + 40.0 * r as f64 - 0.2, 5.0));
            }
        }
        let d = disk_image(240, 220, &centers, 0.3);
        let blobs = detect_blobs(&d, 0.1, 5).unwrap();
        assert_eq!(blobs.len(), 25);
        for (b, c) in blobs.iter().zip(&centers) {
            assert!((b.x - c.0).abs() < 0.2 && (b.y - c.1).abs() < 0.2, "{b:?} vs {c:?}");
        }
    }

    #[test]
    fn min_area_filters_and_threshold_validated() {
        let d = disk_image(50, 50, &[(10.0, 10.0, 1.0), (30.0, 30.0, 6.0)], 0.3);
        assert_eq!(detect_blobs(&d, 0.1, 10).unwrap().len(), 1);
        assert_eq!(detect_blobs(&d, 0.1, 1).unwrap().len(), 2);
        assert!(detect_blobs(&d, 0.0, 1).is_err());
        assert!(detect_blobs(&d, 1.0, 1).is_err());
    }

    #[test]
    fn diagonal_neighbors_are_separate_components() {
        let mut data = vec![0.0; 9];
        data[0] = -0.5;
        data[4] = -0.5;
        let d = DiffImage::new(3, 3, data).unwrap();
        assert_eq!(detect_blobs(&d, 0.1, 1).unwrap().len(), 2);
    }
}
