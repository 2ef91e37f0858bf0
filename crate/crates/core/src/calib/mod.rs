//! Sensor calibration: virtual-marker image rectification and the
//! single-image intensity-to-depth table.

mod depth;
mod remap;

pub use depth::{
    calibrate_depth, isotonic_non_decreasing, lookup_depth, DepthCalibOptions,
    IntensityDepthTable,
};
pub use remap::{build_remap, rectify, GridModel, GridSpec, RemapField, RemapHeader};
