//! Forward model of the translucent gel.
//!
//! A Winkler elastic foundation stands in for the hyper-elastic silicone:
//! objects indent the gel, part of the displaced volume reappears as a bulge
//! around the contact (biased by drag and twist), and an exponential optical
//! model turns thickness into intensity (thinner is darker, thicker is
//! brighter). The same state yields a 6D wrench label.

mod contact;
mod distortion;
mod library;
mod object;
mod optics;
mod session;
mod wrench;

pub use contact::{distance_to_region, flow, indent, penetration};
pub use distortion::{apply_distortion, RadialDistortion};
pub use library::{
    calibration_board, desk_schedule, object_library, LibraryConfig, ScheduleConfig,
};
pub use object::{procedural_object, HeightField, ObjectShape, ObjectSpec};
pub use optics::{add_noise, reference_image, render};
pub use session::{
    simulate_frame, simulate_session, write_session, Frame, FrameRecord, Session, SessionConfig,
    Trajectory,
};
pub use wrench::synthesize_wrench;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::raster_type;

/// Exponential thickness-to-intensity response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticalModel {
    /// Asymptotic intensity drop for deep indentation.
    pub i_drop_max: f64,
    /// Darkening decay length, mm.
    pub lambda_d: f64,
    /// Asymptotic intensity rise for thick bulges.
    pub i_rise_max: f64,
    /// Brightening decay length, mm.
    pub lambda_b: f64,
}

impl Default for OpticalModel {
    fn default() -> Self {
        Self { i_drop_max: 0.6, lambda_d: 1.5, i_rise_max: 0.15, lambda_b: 2.0 }
    }
}

impl OpticalModel {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.i_drop_max) || !in_unit(self.i_rise_max) {
            return Err(Error::Parameter("optical intensity amplitudes must be in (0, 1]".into()));
        }
        if !(self.lambda_d > 0.0 && self.lambda_b > 0.0) {
            return Err(Error::Parameter("optical decay lengths must be positive".into()));
        }
        Ok(())
    }

    /// Intensity drop produced by indentation `depth` (mm).
    pub fn darkening(&self, depth: f64) -> f64 {
        self.i_drop_max * (1.0 - (-depth / self.lambda_d).exp())
    }

    /// Depth (mm) that produces intensity drop `drop`; the analytic inverse
    /// of [`OpticalModel::darkening`].
    pub fn depth_for_drop(&self, drop: f64) -> f64 {
        -self.lambda_d * (1.0 - drop / self.i_drop_max).ln()
    }

    /// Intensity rise produced by bulge height `bulge` (mm).
    pub fn brightening(&self, bulge: f64) -> f64 {
        self.i_rise_max * (1.0 - (-bulge / self.lambda_b).exp())
    }
}

/// Gel material and geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GelSpec {
    /// Undeformed thickness, mm.
    pub h0: f64,
    /// Normal foundation stiffness, N/mm³.
    pub k_n: f64,
    /// Shear foundation stiffness, N/mm³.
    pub k_s: f64,
    /// Bulge decay length, mm.
    pub flow_radius: f64,
    /// Fraction of displaced volume that reappears as bulge.
    pub flow_fraction: f64,
    pub optics: OpticalModel,
}

impl Default for GelSpec {
    fn default() -> Self {
        Self {
            h0: 5.0,
            k_n: 0.04,
            k_s: 0.02,
            flow_radius: 2.0,
            flow_fraction: 0.6,
            optics: OpticalModel::default(),
        }
    }
}

impl GelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > 0.0 && self.k_n > 0.0 && self.k_s > 0.0 && self.flow_radius > 0.0) {
            return Err(Error::Parameter(
                "h0, k_n, k_s and flow_radius must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flow_fraction) {
            return Err(Error::Parameter("flow_fraction must be in [0, 1]".into()));
        }
        self.optics.validate()
    }
}

/// Pose of an object against the gel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactState {
    /// Depth of the object's lowest point below the undeformed surface, mm.
    pub press_depth: f64,
    /// In-plane shear displacement, mm.
    pub drag: [f64; 2],
    /// Rotation about the surface normal, radians.
    pub twist: f64,
    /// Object center in image pixels (column, row).
    pub center: [f64; 2],
    /// Surface slope of the pressing pose along image x and y, each in
    /// `[-0.5, 0.5]`; the object's lowest point stays at `press_depth`.
    #[serde(default)]
    pub tilt: [f64; 2],
}

impl ContactState {
    pub fn press(center: [f64; 2], press_depth: f64) -> Self {
        Self { press_depth, center, ..Default::default() }
    }

    pub fn validate(&self, gel: &GelSpec) -> Result<()> {
        if self.press_depth >= gel.h0 {
            return Err(Error::PunchThrough { depth: self.press_depth, h0: gel.h0 });
        }
        let finite = [self.press_depth, self.drag[0], self.drag[1], self.twist]
            .iter()
            .chain(self.center.iter())
            .all(|v| v.is_finite());
        if !finite || self.press_depth < 0.0 || self.tilt.iter().any(|t| !(-0.5..=0.5).contains(t))
        {
            return Err(Error::Parameter(format!("invalid contact state {self:?}")));
        }
        Ok(())
    }
}

raster_type!(
    /// Per-pixel gel thickness in mm.
    ThicknessField,
    |v| v.is_finite() && v > 0.0,
    |v| v.max(f64::MIN_POSITIVE),
    "(0, inf)"
);

impl ThicknessField {
    pub fn uniform(width: usize, height: usize, h0: f64) -> Result<Self> {
        Self::filled(width, height, h0)
    }
}
