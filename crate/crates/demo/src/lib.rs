//! Browser front end: press an object into the simulated gel, reconstruct
//! the press from a calibrated intensity-depth table, and straighten a
//! distorted marker board. Images cross the boundary as RGBA bytes.

use tactile_core::calib::{build_remap, calibrate_depth, rectify, DepthCalibOptions, GridSpec, IntensityDepthTable};
use tactile_core::deform::{compose_triple, visualize};
use tactile_core::gelsim::{
    apply_distortion, calibration_board, procedural_object, reference_image, simulate_frame, ContactState,
    GelSpec, ObjectShape, ObjectSpec,
};
use tactile_core::recon::{difference, reconstruct, ReconParams};
use tactile_core::{detect_blobs, DepthMap, GrayImage, PixelScale, RgbImage};
use wasm_bindgen::prelude::*;

pub const WIDTH: usize = 460;
pub const HEIGHT: usize = 345;
const RAW: (usize, usize) = (640, 480);

fn gray_rgba(img: &GrayImage) -> Vec<u8> {
    img.data().iter().flat_map(|&v| {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        [g, g, g, 255]
    }).collect()
}

fn rgb_rgba(img: &RgbImage) -> Vec<u8> {
    img.pixels()
        .iter()
        .flat_map(|p| {
            let c = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [c(p[0]), c(p[1]), c(p[2]), 255]
        })
        .collect()
}

/// Black through red to yellow, scaled to `max`.
fn heat_rgba(depth: &DepthMap, max: f64) -> Vec<u8> {
    depth
        .data()
        .iter()
        .flat_map(|&d| {
            let t = if max > 0.0 { (d / max).clamp(0.0, 1.0) } else { 0.0 };
            let r = (2.0 * t).min(1.0);
            let g = (2.0 * t - 1.0).max(0.0);
            [(r * 255.0) as u8, (g * 255.0) as u8, 0, 255]
        })
        .collect()
}

fn shape(kind: &str, size: f64) -> Result<ObjectShape, String> {
    Ok(match kind {
        "sphere" => ObjectShape::Sphere { radius: size },
        "cylinder" => ObjectShape::Cylinder { radius: size },
        "cone" => ObjectShape::Cone { radius: size, height: size * 0.8 },
        "star" => ObjectShape::PrismStar { outer_radius: size, inner_radius: size * 0.5, points: 5 },
        "ellipsoid" => ObjectShape::Superellipsoid { a: size, b: size * 0.6, c: 2.0, exponent: 2.0 },
        other => return Err(format!("unknown shape {other:?}")),
    })
}

/// A sensor with its reference frame and a depth table calibrated from a
/// 4 mm ball pressed 1 mm deep.
#[wasm_bindgen]
pub struct Sensor {
    gel: GelSpec,
    scale: PixelScale,
    reference: GrayImage,
    table: IntensityDepthTable,
    last_max_depth: f64,
}

impl Sensor {
    pub fn create(seed: u64) -> Result<Self, String> {
        let gel = GelSpec::default();
        let scale = PixelScale::DEFAULT;
        let reference = reference_image(WIDTH, HEIGHT, seed);
        let ball = procedural_object(&ObjectSpec::new(ObjectShape::Sphere { radius: 4.0 }, 0.02), 0)
            .map_err(|e| e.to_string())?;
        let center = [WIDTH as f64 / 2.0, HEIGHT as f64 / 2.0];
        let (calib, _) = simulate_frame(&gel, &ball, &ContactState::press(center, 1.0), &reference, scale)
            .map_err(|e| e.to_string())?;
        let table = calibrate_depth(&reference, &calib, scale, &DepthCalibOptions::default()).map_err(|e| e.to_string())?;
        Ok(Self { gel, scale, reference, table, last_max_depth: 0.0 })
    }

    fn frame(&self, kind: &str, size: f64, depth: f64, drag: [f64; 2], twist: f64) -> Result<GrayImage, String> {
        let obj = procedural_object(&ObjectSpec::new(shape(kind, size)?, self.scale.mm_per_pixel() / 2.0), 1)
            .map_err(|e| e.to_string())?;
        let contact = ContactState {
            press_depth: depth,
            drag,
            twist,
            center: [WIDTH as f64 / 2.0, HEIGHT as f64 / 2.0],
            tilt: [0.0, 0.0],
        };
        let (img, _) = simulate_frame(&self.gel, &obj, &contact, &self.reference, self.scale).map_err(|e| e.to_string())?;
        Ok(img)
    }

    /// Tactile frame (top) over the darker/brighter overlay (bottom).
    pub fn press_image(&self, kind: &str, size: f64, depth: f64, drag: [f64; 2], twist: f64) -> Result<Vec<u8>, String> {
        let tactile = self.frame(kind, size, depth, drag, twist)?;
        let triple = compose_triple(&self.reference, &tactile).map_err(|e| e.to_string())?;
        let overlay = visualize(&triple, 4.0).map_err(|e| e.to_string())?;
        let mut out = gray_rgba(&tactile);
        out.extend(rgb_rgba(&overlay));
        Ok(out)
    }

    /// Reconstructed depth of a ball press as a heat map.
    pub fn reconstruct_image(&mut self, radius: f64, depth: f64) -> Result<Vec<u8>, String> {
        let tactile = self.frame("sphere", radius, depth, [0.0, 0.0], 0.0)?;
        let diff = difference(&self.reference, &tactile).map_err(|e| e.to_string())?;
        let map = reconstruct(&diff, &self.table, &ReconParams::default()).map_err(|e| e.to_string())?;
        self.last_max_depth = map.max_value();
        Ok(heat_rgba(&map, self.table.max_depth().max(depth)))
    }
}

/// Distorted raw board (640x480) followed by the rectified crop (460x345),
/// plus the number of markers found in the raw frame.
pub fn board_round_trip(k1: f64) -> Result<(Vec<u8>, Vec<u8>, usize), String> {
    let err = |e: tactile_core::Error| e.to_string();
    let spec = GridSpec::default();
    let board = calibration_board(5, 5, spec.spacing_mm, 0.5, 0.02).map_err(err)?;
    let reference = reference_image(RAW.0, RAW.1, 3);
    let center = [RAW.0 as f64 / 2.0, RAW.1 as f64 / 2.0];
    let (imprint, _) = simulate_frame(&GelSpec::default(), &board, &ContactState::press(center, 0.5), &reference, PixelScale::DEFAULT)
        .map_err(err)?;
    let raw_ref = apply_distortion(&reference, k1, 0.0, center).map_err(err)?;
    let raw = apply_distortion(&imprint, k1, 0.0, center).map_err(err)?;
    let markers = detect_blobs(&difference(&raw_ref, &raw).map_err(err)?, 0.05, 10).map_err(err)?;
    let (remap, _) = build_remap(&markers, &spec, RAW, (WIDTH, HEIGHT)).map_err(err)?;
    let fixed = rectify(&raw, &remap).map_err(err)?;
    Ok((gray_rgba(&raw), gray_rgba(&fixed), markers.len()))
}

#[wasm_bindgen]
impl Sensor {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Sensor, JsError> {
        Sensor::create(seed.into()).map_err(|e| JsError::new(&e))
    }

    pub fn width(&self) -> usize {
        WIDTH
    }

    pub fn height(&self) -> usize {
        HEIGHT
    }

    /// RGBA, two stacked 460x345 panels.
    pub fn press(&self, kind: &str, size: f64, depth: f64, drag_x: f64, drag_y: f64, twist: f64) -> Result<Vec<u8>, JsError> {
        self.press_image(kind, size, depth, [drag_x, drag_y], twist).map_err(|e| JsError::new(&e))
    }

    pub fn reconstruct(&mut self, radius: f64, depth: f64) -> Result<Vec<u8>, JsError> {
        self.reconstruct_image(radius, depth).map_err(|e| JsError::new(&e))
    }

    /// Largest depth of the last reconstruction, mm.
    pub fn max_depth(&self) -> f64 {
        self.last_max_depth
    }
}

#[wasm_bindgen]
pub struct BoardFrames {
    raw: Vec<u8>,
    rectified: Vec<u8>,
    markers: usize,
}

#[wasm_bindgen]
impl BoardFrames {
    pub fn raw(&self) -> Vec<u8> {
        self.raw.clone()
    }

    pub fn rectified(&self) -> Vec<u8> {
        self.rectified.clone()
    }

    pub fn markers(&self) -> usize {
        self.markers
    }
}

#[wasm_bindgen]
pub fn rectify_board(k1: f64) -> Result<BoardFrames, JsError> {
    let (raw, rectified, markers) = board_round_trip(k1).map_err(|e| JsError::new(&e))?;
    Ok(BoardFrames { raw, rectified, markers })
}
