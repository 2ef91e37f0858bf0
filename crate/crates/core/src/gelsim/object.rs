//! Procedural indenter heightfields.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Surface height of a rigid object above its lowest point, sampled on a
/// square grid centered on the object. Samples outside the footprint never
/// touch the gel.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    width: usize,
    height: usize,
    spacing_mm: f64,
    data: Vec<f64>,
    footprint: Vec<bool>,
    id: String,
}

impl HeightField {
    /// `data` outside the footprint is ignored. Heights inside the footprint
    /// are shifted so their minimum is zero.
    pub fn new(
        width: usize,
        height: usize,
        spacing_mm: f64,
        mut data: Vec<f64>,
        footprint: Vec<bool>,
        id: impl Into<String>,
    ) -> Result<Self> {
        let id = id.into();
        if data.len() != width * height || footprint.len() != width * height {
            return Err(Error::Dimension("height field buffers do not match dimensions".into()));
        }
        if !(spacing_mm > 0.0) || id.is_empty() {
            return Err(Error::Parameter("height field needs positive spacing and an id".into()));
        }
        let inside = || data.iter().zip(&footprint).filter(|(_, &f)| f).map(|(v, _)| *v);
        if inside().any(|v| !v.is_finite()) {
            return Err(Error::Value("non-finite object height".into()));
        }
        let min = inside().fold(f64::INFINITY, f64::min);
        let max = inside().fold(f64::NEG_INFINITY, f64::max);
        if !min.is_finite() {
            return Err(Error::Parameter("object footprint is empty".into()));
        }
        for (v, &f) in data.iter_mut().zip(&footprint) {
            *v = if f { *v - min } else { max - min };
        }
        Ok(Self { width, height, spacing_mm, data, footprint, id })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn footprint(&self) -> &[bool] {
        &self.footprint
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Distance from the grid center to its farthest corner, mm.
    pub fn extent_mm(&self) -> f64 {
        let hw = (self.width as f64 - 1.0) / 2.0;
        let hh = (self.height as f64 - 1.0) / 2.0;
        (hw * hw + hh * hh).sqrt() * self.spacing_mm
    }

    /// Height at object-frame position `(u, v)` mm, or `None` off the
    /// footprint. Membership follows the nearest sample; the value is a
    /// bilinear blend of the footprint samples around the point.
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let su = u / self.spacing_mm + (self.width as f64 - 1.0) / 2.0;
        let sv = v / self.spacing_mm + (self.height as f64 - 1.0) / 2.0;
        let (nu, nv) = (su.round(), sv.round());
        if nu < 0.0 || nv < 0.0 || nu >= self.width as f64 || nv >= self.height as f64 {
            return None;
        }
        if !self.footprint[nv as usize * self.width + nu as usize] {
            return None;
        }
        let (u0, v0) = (su.floor(), sv.floor());
        let (fu, fv) = (su - u0, sv - v0);
        let (mut acc, mut wsum) = (0.0, 0.0);
        for (du, dv, w) in [
            (0, 0, (1.0 - fu) * (1.0 - fv)),
            (1, 0, fu * (1.0 - fv)),
            (0, 1, (1.0 - fu) * fv),
            (1, 1, fu * fv),
        ] {
            if w == 0.0 {
                continue;
            }
            let (iu, iv) = (u0 as isize + du, v0 as isize + dv);
            if iu < 0 || iv < 0 || iu >= self.width as isize || iv >= self.height as isize {
                continue;
            }
            let idx = iv as usize * self.width + iu as usize;
            if self.footprint[idx] {
                acc += w * self.data[idx];
                wsum += w;
            }
        }
        if wsum == 1.0 {
            Some(acc)
        } else {
            Some(acc / wsum)
        }
    }
}

/// Indenter geometry. All lengths in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectShape {
    Sphere { radius: f64 },
    /// Flat-bottomed cylinder.
    Cylinder { radius: f64 },
    /// Cone with its apex toward the gel.
    Cone { radius: f64, height: f64 },
    /// Flat-bottomed star prism; the seed sets its angular phase.
    PrismStar { outer_radius: f64, inner_radius: f64, points: u32 },
    /// Lower half of `|x/a|^e + |y/b|^e + |z/c|^e = 1`.
    Superellipsoid { a: f64, b: f64, c: f64, exponent: f64 },
}

impl ObjectShape {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ObjectShape::Sphere { .. } => "sphere",
            ObjectShape::Cylinder { .. } => "cylinder",
            ObjectShape::Cone { .. } => "cone",
            ObjectShape::PrismStar { .. } => "prism_star",
            ObjectShape::Superellipsoid { .. } => "superellipsoid",
        }
    }

    fn validate(&self) -> Result<()> {
        let radius_ok = |r: f64| (1.0..=8.0).contains(&r);
        let ok = match *self {
            ObjectShape::Sphere { radius } | ObjectShape::Cylinder { radius } => radius_ok(radius),
            ObjectShape::Cone { radius, height } => radius_ok(radius) && (0.5..=8.0).contains(&height),
            ObjectShape::PrismStar { outer_radius, inner_radius, points } => {
                radius_ok(outer_radius)
                    && radius_ok(inner_radius)
                    && inner_radius < outer_radius
                    && (3..=9).contains(&points)
            }
            ObjectShape::Superellipsoid { a, b, c, exponent } => {
                radius_ok(a) && radius_ok(b) && radius_ok(c) && (0.5..=4.0).contains(&exponent)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("object parameters out of range: {self:?}")))
        }
    }

    /// Half-extent of the footprint along x and y, mm.
    fn half_extent(&self) -> (f64, f64) {
        match *self {
            ObjectShape::Sphere { radius }
            | ObjectShape::Cylinder { radius }
            | ObjectShape::Cone { radius, .. } => (radius, radius),
            ObjectShape::PrismStar { outer_radius, .. } => (outer_radius, outer_radius),
            ObjectShape::Superellipsoid { a, b, .. } => (a, b),
        }
    }
}

/// Shape plus sampling and pose parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: ObjectShape,
    /// Height-field sample spacing, mm.
    pub spacing_mm: f64,
    /// Linear slope added to the surface along x and y (each in
    /// `[-0.5, 0.5]`), modelling an object pressed at an angle.
    #[serde(default)]
    pub tilt: [f64; 2],
}

impl ObjectSpec {
    pub fn new(shape: ObjectShape, spacing_mm: f64) -> Self {
        Self { shape, spacing_mm, tilt: [0.0, 0.0] }
    }
}

fn point_in_polygon(x: f64, y: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn super_term(t: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 {
        t.abs().powi(exponent as i32)
    } else {
        t.abs().powf(exponent)
    }
}

/// Builds a deterministic height field for `(spec, seed)`.
pub fn procedural_object(spec: &ObjectSpec, seed: u64) -> Result<HeightField> {
    spec.shape.validate()?;
    if !(spec.spacing_mm > 0.0 && spec.spacing_mm.is_finite()) {
        return Err(Error::Parameter("object spacing must be positive".into()));
    }
    if spec.tilt.iter().any(|t| !(-0.5..=0.5).contains(t)) {
        return Err(Error::Parameter(format!("tilt {:?} outside [-0.5, 0.5]", spec.tilt)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random_range(0.0..2.0 * PI);

    let (ex, ey) = spec.shape.half_extent();
    let half_w = (ex / spec.spacing_mm).ceil() as usize + 1;
    let half_h = (ey / spec.spacing_mm).ceil() as usize + 1;
    let (w, h) = (2 * half_w + 1, 2 * half_h + 1);

    let star: Vec<(f64, f64)> = match spec.shape {
        ObjectShape::PrismStar { outer_radius, inner_radius, points } => (0..2 * points)
            .map(|k| {
                let r = if k % 2 == 0 { outer_radius } else { inner_radius };
                let a = phase + PI * k as f64 / points as f64;
                (r * a.cos(), r * a.sin())
            })
            .collect(),
        _ => Vec::new(),
    };

    let mut data = vec![0.0; w * h];
    let mut footprint = vec![false; w * h];
    for row in 0..h {
        for col in 0..w {
            let x = (col as f64 - half_w as f64) * spec.spacing_mm;
            let y = (row as f64 - half_h as f64) * spec.spacing_mm;
            let r2 = x * x + y * y;
            let height = match spec.shape {
                ObjectShape::Sphere { radius } => {
                    (r2 <= radius * radius).then(|| radius - (radius * radius - r2).sqrt())
                }
                ObjectShape::Cylinder { radius } => (r2 <= radius * radius).then_some(0.0),
                ObjectShape::Cone { radius, height } => {
                    (r2 <= radius * radius).then(|| r2.sqrt() / radius * height)
                }
                ObjectShape::PrismStar { .. } => point_in_polygon(x, y, &star).then_some(0.0),
                ObjectShape::Superellipsoid { a, b, c, exponent } => {
                    let s = super_term(x / a, exponent) + super_term(y / b, exponent);
                    (s <= 1.0).then(|| {
                        let root = if exponent == 2.0 {
                            (1.0 - s).sqrt()
                        } else {
                            (1.0 - s).powf(1.0 / exponent)
                        };
                        c - c * root
                    })
                }
            };
            if let Some(z) = height {
                let i = row * w + col;
                data[i] = z + spec.tilt[0] * x + spec.tilt[1] * y;
                footprint[i] = true;
            }
        }
    }
    let id = format!("{}-{:016x}", spec.shape.kind_name(), seed);
    HeightField::new(w, h, spec.spacing_mm, data, footprint, id)
}
