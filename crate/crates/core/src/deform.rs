//! Dense deformation representation: the darker channel carries contact
//! geometry, the brighter channel carries gel flow (shear and twist).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};
use crate::io;

/// Per-pixel `max(0, reference - tactile)`.
pub fn darker_image(reference: &GrayImage, tactile: &GrayImage) -> Result<GrayImage> {
    reference.ensure_same_dims(tactile.dims(), "darker image")?;
    let data = reference.data().iter().zip(tactile.data()).map(|(r, t)| (r - t).max(0.0)).collect();
    Ok(GrayImage::from_raw_unchecked(reference.width(), reference.height(), data))
}

/// Per-pixel `max(0, tactile - reference)`.
pub fn brighter_image(reference: &GrayImage, tactile: &GrayImage) -> Result<GrayImage> {
    reference.ensure_same_dims(tactile.dims(), "brighter image")?;
    let data = reference.data().iter().zip(tactile.data()).map(|(r, t)| (t - r).max(0.0)).collect();
    Ok(GrayImage::from_raw_unchecked(reference.width(), reference.height(), data))
}

/// Three-channel regressor input: darker, brighter, reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationTriple {
    pub darker: GrayImage,
    pub brighter: GrayImage,
    pub reference: GrayImage,
}

pub fn compose_triple(reference: &GrayImage, tactile: &GrayImage) -> Result<DeformationTriple> {
    Ok(DeformationTriple {
        darker: darker_image(reference, tactile)?,
        brighter: brighter_image(reference, tactile)?,
        reference: reference.clone(),
    })
}

/// JSON sidecar naming the three channel files of a serialized triple.
/// Paths are relative to the sidecar's directory; `.pgm` channels are 8-bit,
/// `.pfm` channels keep full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleSidecar {
    pub width: usize,
    pub height: usize,
    pub darker: String,
    pub brighter: String,
    pub reference: String,
}

impl TripleSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

pub(crate) fn save_channel(path: &Path, img: &GrayImage) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => io::save_pfm(path, img.width(), img.height(), img.data()),
        _ => io::save_pgm(path, img),
    }
}

fn load_channel(path: &Path) -> Result<GrayImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => {
            let (w, h, data) = io::load_pfm(path)?;
            GrayImage::new(w, h, data)
        }
        _ => io::load_pgm(path),
    }
}

impl DeformationTriple {
    pub fn dims(&self) -> (usize, usize) {
        self.reference.dims()
    }

    /// Writes `<stem>_darker.pgm`, `<stem>_brighter.pgm`,
    /// `<stem>_reference.pgm` and the `<stem>.json` sidecar into `dir`.
    /// Returns the sidecar path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let sidecar = TripleSidecar {
            width: self.reference.width(),
            height: self.reference.height(),
            darker: format!("{stem}_darker.pgm"),
            brighter: format!("{stem}_brighter.pgm"),
            reference: format!("{stem}_reference.pgm"),
        };
        save_channel(&dir.join(&sidecar.darker), &self.darker)?;
        save_channel(&dir.join(&sidecar.brighter), &self.brighter)?;
        save_channel(&dir.join(&sidecar.reference), &self.reference)?;
        let path = dir.join(format!("{stem}.json"));
        sidecar.write(&path)?;
        Ok(path)
    }

    pub fn load(sidecar_path: &Path) -> Result<Self> {
        let sidecar: TripleSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path)?)?;
        let dir = sidecar_path.parent().unwrap_or(Path::new("."));
        let triple = Self {
            darker: load_channel(&dir.join(&sidecar.darker))?,
            brighter: load_channel(&dir.join(&sidecar.brighter))?,
            reference: load_channel(&dir.join(&sidecar.reference))?,
        };
        let dims = (sidecar.width, sidecar.height);
        if triple.darker.dims() != dims || triple.brighter.dims() != dims || triple.reference.dims() != dims {
            return Err(Error::Dimension(format!("triple channels do not match {dims:?}")));
        }
        Ok(triple)
    }
}

/// Red = darker, green = brighter (both scaled by `gain` and clamped),
/// blended 50/50 over the grayscale reference.
pub fn visualize(triple: &DeformationTriple, gain: f64) -> Result<RgbImage> {
    if !(gain > 0.0) {
        return Err(Error::Parameter(format!("visualization gain must be positive, got {gain}")));
    }
    let (w, h) = triple.dims();
    let data = triple
        .reference
        .data()
        .iter()
        .zip(triple.darker.data())
        .zip(triple.brighter.data())
        .map(|((&r, &d), &b)| {
            let red = (gain * d).clamp(0.0, 1.0);
            let green = (gain * b).clamp(0.0, 1.0);
            [0.5 * red + 0.5 * r, 0.5 * green + 0.5 * r, 0.5 * r]
        })
        .collect();
    RgbImage::new(w, h, data)
}

/// Default total darker energy marking contact (intensity × pixels).
pub const DEFAULT_CONTACT_ENERGY: f64 = 50.0;

/// Contact iff the total darker energy strictly exceeds the threshold.
pub fn detect_contact(darker: &GrayImage, energy_threshold: f64) -> bool {
    darker.sum() > energy_threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::difference;

    fn pair() -> (GrayImage, GrayImage) {
        let r = GrayImage::from_fn(8, 6, |x, y| 0.5 + 0.02 * ((x + y) % 5) as f64).unwrap();
        let t = GrayImage::from_fn(8, 6, |x, y| 0.3 + 0.1 * ((x * 3 + y) % 5) as f64).unwrap();
        (r, t)
    }

    #[test]
    fn identical_images_give_zero_channels() {
        let (r, _) = pair();
        let tr = compose_triple(&r, &r).unwrap();
        assert!(tr.darker.data().iter().chain(tr.brighter.data()).all(|&v| v == 0.0));
        assert_eq!(tr.reference, r);
    }

    #[test]
    fn clamping_examples() {
        let r = GrayImage::new(2, 1, vec![0.8, 0.5]).unwrap();
        let t = GrayImage::new(2, 1, vec![0.5, 0.8]).unwrap();
        let d = darker_image(&r, &t).unwrap();
        assert!((d.get(0, 0) - 0.3).abs() < 1e-12);
        assert_eq!(d.get(1, 0), 0.0);
    }

    #[test]
    fn channel_identities() {
        let (r, t) = pair();
        let tr = compose_triple(&r, &t).unwrap();
        let diff = difference(&r, &t).unwrap();
        for i in 0..r.data().len() {
            let (d, b) = (tr.darker.data()[i], tr.brighter.data()[i]);
            assert_eq!(d, -(diff.data()[i].min(0.0)));
            assert_eq!(d * b, 0.0);
            assert!((d + b - (t.data()[i] - r.data()[i]).abs()).abs() < 1e-15);
            assert_eq!(d - b, r.data()[i] - t.data()[i]);
        }
    }

    #[test]
    fn zero_deformation_visualizes_gray() {
        let (r, _) = pair();
        let rgb = visualize(&compose_triple(&r, &r).unwrap(), 3.0).unwrap();
        for p in rgb.pixels() {
            assert_eq!(p[0], p[1]);
            assert_eq!(p[1], p[2]);
        }
        assert!(visualize(&compose_triple(&r, &r).unwrap(), 0.0).is_err());
    }

    #[test]
    fn contact_threshold_is_strict() {
        let d = GrayImage::filled(10, 10, 0.5).unwrap();
        assert!(!detect_contact(&GrayImage::filled(10, 10, 0.0).unwrap(), 1.0));
        assert!(!detect_contact(&d, d.sum()));
        assert!(detect_contact(&d, d.sum() - 1e-9));
    }

    #[test]
    fn triple_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let (r, t) = pair();
        let tr = compose_triple(&r, &t).unwrap();
        let path = tr.save(dir.path(), "s0").unwrap();
        let back = DeformationTriple::load(&path).unwrap();
        assert_eq!(back.dims(), tr.dims());
        for (a, b) in back.darker.data().iter().zip(tr.darker.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
