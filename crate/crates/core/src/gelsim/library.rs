//! Procedural object sets and contact schedules for synthetic data
//! collection.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::PixelScale;

use super::{procedural_object, ContactState, HeightField, ObjectShape, ObjectSpec, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    pub count: usize,
    /// Footprint radius range, mm.
    pub min_radius: f64,
    pub max_radius: f64,
    /// Largest surface slope applied to an object.
    pub max_tilt: f64,
    pub seed: u64,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self { count: 20, min_radius: 1.5, max_radius: 4.0, max_tilt: 0.0, seed: 0 }
    }
}

/// `count` objects cycling through every shape kind, with ids `obj-00`,
/// `obj-01`, ...
pub fn object_library(cfg: &LibraryConfig, scale: PixelScale) -> Result<Vec<HeightField>> {
    if !(1.0 <= cfg.min_radius && cfg.min_radius <= cfg.max_radius && cfg.max_radius <= 8.0) {
        return Err(Error::Parameter("library radii must satisfy 1 <= min <= max <= 8".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut radius = || rng.random_range(cfg.min_radius..=cfg.max_radius);
        let shape = match i % 5 {
            0 => ObjectShape::Sphere { radius: radius() + 1.0 },
            1 => ObjectShape::Cylinder { radius: radius() },
            2 => {
                let r = radius();
                ObjectShape::Cone { radius: r, height: r * rng.random_range(0.5..1.0) }
            }
            3 => {
                let outer = radius();
                let inner = (outer * rng.random_range(0.45..0.7)).max(1.0).min(outer - 0.1);
                ObjectShape::PrismStar {
                    outer_radius: outer,
                    inner_radius: inner,
                    points: rng.random_range(3..=7),
                }
            }
            _ => ObjectShape::Superellipsoid {
                a: radius(),
                b: radius(),
                c: rng.random_range(1.5..4.0),
                exponent: rng.random_range(0.8..4.0),
            },
        };
        let mut spec = ObjectSpec::new(shape, scale.mm_per_pixel());
        spec.tilt = [
            rng.random_range(-cfg.max_tilt..=cfg.max_tilt),
            rng.random_range(-cfg.max_tilt..=cfg.max_tilt),
        ];
        let seed = rng.random();
        out.push(procedural_object(&spec, seed)?.with_id(format!("obj-{i:02}")));
    }
    Ok(out)
}

/// Cylinder-array calibration board: `rows x cols` flat pins of
/// `pin_radius_mm`, `spacing_mm` apart, centered on the field.
pub fn calibration_board(
    rows: usize,
    cols: usize,
    spacing_mm: f64,
    pin_radius_mm: f64,
    sample_mm: f64,
) -> Result<HeightField> {
    if rows == 0 || cols == 0 || !(pin_radius_mm > 0.0 && 2.0 * pin_radius_mm < spacing_mm) {
        return Err(Error::Parameter("board pins must be non-overlapping".into()));
    }
    let half_x = ((cols - 1) as f64 * spacing_mm / 2.0 + pin_radius_mm) / sample_mm;
    let half_y = ((rows - 1) as f64 * spacing_mm / 2.0 + pin_radius_mm) / sample_mm;
    let (hw, hh) = (half_x.ceil() as usize + 1, half_y.ceil() as usize + 1);
    let (w, h) = (2 * hw + 1, 2 * hh + 1);
    let mut footprint = vec![false; w * h];
    for r in 0..rows {
        for c in 0..cols {
            let px = (c as f64 - (cols - 1) as f64 / 2.0) * spacing_mm;
            let py = (r as f64 - (rows - 1) as f64 / 2.0) * spacing_mm;
            for y in 0..h {
                for x in 0..w {
                    let dx = (x as f64 - hw as f64) * sample_mm - px;
                    let dy = (y as f64 - hh as f64) * sample_mm - py;
                    if dx * dx + dy * dy <= pin_radius_mm * pin_radius_mm {
                        footprint[y * w + x] = true;
                    }
                }
            }
        }
    }
    HeightField::new(w, h, sample_mm, vec![0.0; w * h], footprint, "calibration-board")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub trajectories_per_object: usize,
    /// Frames in the press ramp.
    pub press_steps: usize,
    /// Frames in the drag/twist segment at full depth.
    pub move_steps: usize,
    /// Press depth range, mm.
    pub min_press: f64,
    pub max_press: f64,
    /// Largest drag, mm.
    pub max_drag: f64,
    /// Largest twist, radians.
    pub max_twist: f64,
    /// Largest pose slope per axis.
    pub max_tilt: f64,
    /// Keep contact centers this many pixels from the image border.
    pub margin_px: f64,
    pub seed: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            trajectories_per_object: 14,
            press_steps: 4,
            move_steps: 8,
            min_press: 0.3,
            max_press: 1.2,
            max_drag: 1.5,
            max_twist: 0.4,
            max_tilt: 0.15,
            margin_px: 80.0,
            seed: 0,
        }
    }
}

/// Press ramp, then a drag and/or twist at constant depth, then a release
/// frame, for every object.
pub fn desk_schedule(
    n_objects: usize,
    dims: (usize, usize),
    cfg: &ScheduleConfig,
) -> Result<Vec<Trajectory>> {
    if cfg.press_steps == 0 || !(0.0 < cfg.min_press && cfg.min_press <= cfg.max_press) {
        return Err(Error::Parameter("schedule needs press steps and a valid depth range".into()));
    }
    if !(0.0..=0.5).contains(&cfg.max_tilt) {
        return Err(Error::Parameter("schedule max_tilt must lie in [0, 0.5]".into()));
    }
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    let margin = cfg.margin_px.min(w / 2.0 - 1.0).min(h / 2.0 - 1.0).max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for object in 0..n_objects {
        for _ in 0..cfg.trajectories_per_object {
            let center = [
                rng.random_range(margin..=w - 1.0 - margin),
                rng.random_range(margin..=h - 1.0 - margin),
            ];
            let depth = rng.random_range(cfg.min_press..=cfg.max_press);
            let motion = rng.random_range(0..3);
            let angle = rng.random_range(0.0..2.0 * PI);
            let drag_len = if motion != 1 { rng.random_range(0.2..=cfg.max_drag) } else { 0.0 };
            let twist = if motion != 0 {
                let t = rng.random_range(0.1..=cfg.max_twist);
                if rng.random_bool(0.5) {
                    t
                } else {
                    -t
                }
            } else {
                0.0
            };
            let drag = [drag_len * angle.cos(), drag_len * angle.sin()];
            let tilt = [
                rng.random_range(-cfg.max_tilt..=cfg.max_tilt),
                rng.random_range(-cfg.max_tilt..=cfg.max_tilt),
            ];

            let mut steps = Vec::with_capacity(cfg.press_steps + cfg.move_steps + 1);
            for k in 1..=cfg.press_steps {
                let d = depth * k as f64 / cfg.press_steps as f64;
                steps.push(ContactState { tilt, ..ContactState::press(center, d) });
            }
            for k in 1..=cfg.move_steps {
                let f = k as f64 / cfg.move_steps as f64;
                steps.push(ContactState {
                    press_depth: depth,
                    drag: [drag[0] * f, drag[1] * f],
                    twist: twist * f,
                    center,
                    tilt,
                });
            }
            steps.push(ContactState::press(center, 0.0));
            out.push(Trajectory { object, steps });
        }
    }
    Ok(out)
}
