//! Vision-based tactile sensing pipeline.
//!
//! * [`gelsim`]: forward model of the gel (indentation, flow, optics, wrench
//!   labels, lens distortion) used as ground truth.
//! * [`calib`]: virtual-marker rectification and single-image
//!   intensity-to-depth calibration.
//! * [`recon`]: difference image to depth map to point cloud, plus
//!   sphere-press accuracy evaluation.
//! * [`deform`]: darker/brighter channel representation of gel deformation.
//! * [`force`]: dataset collection, splits, and a compact CNN wrench
//!   regressor trained with Adam.

pub mod blob;
pub mod calib;
pub mod deform;
pub mod error;
pub mod filter;
pub mod force;
pub mod gelsim;
pub mod image;
pub mod io;
pub mod recon;

pub use blob::{detect_blobs, Blob};
pub use error::{Error, Result};
pub use filter::gaussian_blur;
pub use image::{to_grayscale, DepthMap, DiffImage, GrayImage, PixelScale, Raster, RgbImage, Wrench};
