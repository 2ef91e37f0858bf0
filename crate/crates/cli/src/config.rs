//! Run configuration: one TOML document with a section per pipeline stage.
//! Units: lengths in mm, forces in N, torques in N·m, intensities in [0, 1].

use std::path::Path;

use serde::{Deserialize, Serialize};
use tactile_core::calib::{DepthCalibOptions, GridSpec};
use tactile_core::force::{CollectOptions, TrainConfig};
use tactile_core::gelsim::{GelSpec, LibraryConfig, ScheduleConfig};
use tactile_core::recon::ReconParams;

use crate::CliError;

/// Sensor geometry and the synthetic camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Raw camera frame, pixels.
    pub raw_width: usize,
    pub raw_height: usize,
    /// Rectified, cropped frame, pixels.
    pub width: usize,
    pub height: usize,
    /// Nominal mm per pixel before calibration.
    pub mm_per_pixel: f64,
    /// Pixel noise added to synthetic frames.
    pub noise_std: f64,
    /// Radial distortion of the synthetic lens.
    pub k1: f64,
    pub k2: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            raw_width: 640,
            raw_height: 480,
            width: 460,
            height: 345,
            mm_per_pixel: 24.0 / 460.0,
            noise_std: 0.0,
            k1: 0.08,
            k2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Ball radius, bin width and contact threshold of the depth table.
    pub depth: DepthCalibOptions,
    /// Press depth of the synthetic calibration ball, mm.
    pub ball_press_mm: f64,
    pub grid: GridSpec,
    /// Board pin radius and press depth, mm.
    pub pin_radius_mm: f64,
    pub board_press_mm: f64,
    /// Intensity drop marking a board imprint.
    pub marker_threshold: f64,
    /// Smallest marker blob, pixels.
    pub marker_min_area: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            depth: DepthCalibOptions::default(),
            ball_press_mm: 1.0,
            grid: GridSpec::default(),
            pin_radius_mm: 0.5,
            board_press_mm: 0.5,
            marker_threshold: 0.05,
            marker_min_area: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Samples held out by the standard split; 0 means 10 %.
    pub n_test: usize,
    /// Objects held out by the object split; empty means a seeded quarter
    /// of the objects.
    pub test_objects: Vec<String>,
    /// Share of the training half used for epoch selection.
    pub validation_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { n_test: 0, test_objects: Vec::new(), validation_fraction: 0.1 }
    }
}

/// Every stochastic stage draws its seed from the top-level `seed`; seed
/// fields inside sections are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub gel: GelSpec,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub recon: ReconParams,
    #[serde(default)]
    pub library: LibraryConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub collection: CollectOptions,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub split: SplitConfig,
}

/// Offsets that decorrelate the per-stage random streams.
pub mod stream {
    pub const LIBRARY: u64 = 0;
    pub const SCHEDULE: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const TRAINING: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const REFERENCE: u64 = 5;
    pub const VALIDATION: u64 = 6;
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            gel: GelSpec::default(),
            sensor: SensorConfig::default(),
            calibration: CalibrationConfig::default(),
            recon: ReconParams::default(),
            library: LibraryConfig::default(),
            schedule: ScheduleConfig::default(),
            collection: CollectOptions::default(),
            training: TrainConfig::default(),
            split: SplitConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// TOML text with units as trailing comments. Section seeds are left
    /// out because the top-level seed overrides them.
    pub fn to_toml(&self) -> String {
        let raw = toml::to_string(self).expect("config serializes");
        let mut section = String::new();
        let mut out = String::new();
        for line in raw.lines() {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_string();
            }
            let key = line.split(" = ").next().unwrap_or("");
            if !section.is_empty() && key == "seed" {
                continue;
            }
            out.push_str(line);
            if let Some(note) = unit_note(&section, key) {
                out.push_str("  # ");
                out.push_str(note);
            }
            out.push('\n');
        }
        out
    }

    pub fn seed_for(&self, stream: u64) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.sensor;
        if s.width == 0 || s.height == 0 || s.width > s.raw_width || s.height > s.raw_height {
            return Err(CliError::usage(format!("sensor frame {}x{} does not fit the raw frame", s.width, s.height)));
        }
        if !(s.mm_per_pixel > 0.0) || !(s.noise_std >= 0.0) {
            return Err(CliError::usage("sensor scale must be positive and noise non-negative"));
        }
        if !(0.0..1.0).contains(&self.split.validation_fraction) {
            return Err(CliError::usage("validation_fraction must be in [0, 1)"));
        }
        self.gel.validate().map_err(|e| CliError::usage(e.to_string()))?;
        self.training.validate().map_err(|e| CliError::usage(e.to_string()))?;
        self.calibration.grid.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(())
    }

    pub fn library(&self) -> LibraryConfig {
        LibraryConfig { seed: self.seed_for(stream::LIBRARY), ..self.library.clone() }
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig { seed: self.seed_for(stream::SCHEDULE), ..self.schedule.clone() }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig { seed: self.seed_for(stream::TRAINING), ..self.training }
    }
}

fn unit_note(section: &str, key: &str) -> Option<&'static str> {
    Some(match (section, key) {
        ("", "seed") => "root of every random stream",
        ("gel", "h0") => "mm, undeformed gel thickness",
        ("gel", "k_n") => "N/mm^3, normal Winkler stiffness",
        ("gel", "k_s") => "N/mm^3, shear stiffness",
        ("gel", "flow_radius") => "mm, bulge decay length",
        ("gel", "flow_fraction") => "share of displaced volume that bulges",
        ("gel.optics", "i_drop_max") => "intensity, darkening at full compression",
        ("gel.optics", "lambda_d") => "mm",
        ("gel.optics", "i_rise_max") => "intensity, brightening limit",
        ("gel.optics", "lambda_b") => "mm",
        ("sensor", "raw_width" | "raw_height") => "px, camera frame",
        ("sensor", "width" | "height") => "px, rectified crop",
        ("sensor", "mm_per_pixel") => "mm/px of the rectified crop",
        ("sensor", "noise_std") => "intensity",
        ("sensor", "k1" | "k2") => "radial distortion, radius normalized by half-diagonal",
        ("calibration", "ball_press_mm") => "mm",
        ("calibration", "pin_radius_mm") => "mm",
        ("calibration", "board_press_mm") => "mm",
        ("calibration", "marker_threshold") => "intensity drop",
        ("calibration", "marker_min_area") => "px",
        ("calibration.depth", "ball_radius_mm") => "mm",
        ("calibration.depth", "bin_width") => "intensity, one 8-bit level",
        ("calibration.depth", "contact_threshold") => "intensity",
        ("calibration.grid", "spacing_mm") => "mm, pin pitch",
        ("recon", "sigma1" | "sigma2") => "px",
        ("recon", "radius1" | "radius2") => "px",
        ("library", "min_radius" | "max_radius") => "mm",
        ("library", "max_tilt") => "slope, per-object surface tilt",
        ("schedule", "min_press" | "max_press") => "mm",
        ("schedule", "max_drag") => "mm",
        ("schedule", "max_twist") => "rad",
        ("schedule", "max_tilt") => "slope, per-trajectory pose tilt",
        ("schedule", "margin_px") => "px",
        ("collection", "epsilon") => "gate distance in normalized wrench units",
        ("collection", "contact_energy") => "summed darker intensity",
        ("training", "epochs") => "full-scale setup: 200",
        ("training", "batch_size") => "full-scale setup: 64",
        ("training", "learning_rate") => "full-scale setup: 5e-4",
        ("split", "validation_fraction") => "of the training half, for epoch selection",
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(toml::from_str::<RunConfig>("[gel]\nh0 = 5.0\n").is_err());
        let c: RunConfig = toml::from_str("seed = 3\n").unwrap();
        assert_eq!(c, RunConfig::with_seed(3));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::with_seed(9);
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back.training(), c.training());
        assert_eq!(back.schedule(), c.schedule());
        assert_eq!(back.library(), c.library());
        assert_eq!(back.gel, c.gel);
        assert_eq!(back.sensor, c.sensor);
        assert!(c.to_toml().contains("h0 = 5.0  # mm"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("seed = 1\n[sensor]\nwidht = 3\n").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c: RunConfig = toml::from_str("seed = 1\n[training]\nepochs = 2\n[gel.optics]\nlambda_d = 1.0\n").unwrap();
        assert_eq!(c.training.epochs, 2);
        assert_eq!(c.training.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.gel.optics.lambda_d, 1.0);
        assert_eq!(c.gel.h0, GelSpec::default().h0);
    }
}
