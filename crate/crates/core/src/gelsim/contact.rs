use crate::error::Result;
use crate::image::{bilinear_clamped, DepthMap, PixelScale};

use super::{ContactState, GelSpec, HeightField, ThicknessField};

/// Pre-flow thickness: `h0 - max(0, press_depth - object_height)` where the
/// object is rotated by `twist` and centered at `contact.center`.
pub fn indent(
    gel: &GelSpec,
    obj: &HeightField,
    contact: &ContactState,
    scale: PixelScale,
    dims: (usize, usize),
) -> Result<ThicknessField> {
    gel.validate()?;
    contact.validate(gel)?;
    let (w, h) = dims;
    let mut data = vec![gel.h0; w * h];
    if contact.press_depth == 0.0 {
        return ThicknessField::new(w, h, data);
    }
    let s = scale.mm_per_pixel();
    let (sin, cos) = contact.twist.sin_cos();
    let [cx, cy] = contact.center;
    let reach = obj.extent_mm() / s + 2.0;
    let x_lo = (cx - reach).floor().max(0.0) as usize;
    let y_lo = (cy - reach).floor().max(0.0) as usize;
    let x_hi = ((cx + reach).ceil().max(0.0) as usize).min(w);
    let y_hi = ((cy + reach).ceil().max(0.0) as usize).min(h);
    let mut heights = Vec::new();
    let mut lowest = f64::INFINITY;
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let dx = (x as f64 - cx) * s;
            let dy = (y as f64 - cy) * s;
            // world -> object frame: rotate by -twist
            let u = cos * dx + sin * dy;
            let v = -sin * dx + cos * dy;
            if let Some(z) = obj.sample(u, v) {
                let z = z + contact.tilt[0] * dx + contact.tilt[1] * dy;
                lowest = lowest.min(z);
                heights.push((y * w + x, z));
            }
        }
    }
    // a tilted pose may lift the object's own minimum off zero
    let base = if contact.tilt == [0.0, 0.0] { 0.0 } else { lowest.min(0.0) };
    for (i, z) in heights {
        let p = contact.press_depth - (z - base);
        if p > 0.0 {
            data[i] = gel.h0 - p;
        }
    }
    ThicknessField::new(w, h, data)
}

/// Penetration depth `max(0, h0 - t)` of a thickness field.
pub fn penetration(thickness: &ThicknessField, gel: &GelSpec) -> DepthMap {
    let data = thickness.data().iter().map(|t| (gel.h0 - t).max(0.0)).collect();
    DepthMap::from_raw_unchecked(thickness.width(), thickness.height(), data)
}

const FAR: f64 = 1e20;

/// 1D squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let parabola = |q: usize| f[q] + (q * q) as f64;
    for q in 1..n {
        let mut s = (parabola(q) - parabola(v[k])) / (2.0 * (q - v[k]) as f64);
        // z[0] is -inf, so this stops at k = 0 at the latest
        while s <= z[k] {
            k -= 1;
            s = (parabola(q) - parabola(v[k])) / (2.0 * (q - v[k]) as f64);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (qi, o) in out.iter_mut().enumerate() {
        while z[k + 1] < qi as f64 {
            k += 1;
        }
        let d = qi as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance (pixels) from every pixel to the nearest pixel
/// with `region[i] == true`. Infinite everywhere if the region is empty.
pub fn distance_to_region(region: &[bool], width: usize, height: usize) -> Vec<f64> {
    if !region.iter().any(|&r| r) {
        return vec![f64::INFINITY; width * height];
    }
    let n = width.max(height);
    let mut grid: Vec<f64> = region.iter().map(|&r| if r { 0.0 } else { FAR }).collect();
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    grid.iter_mut().for_each(|d| *d = d.sqrt());
    grid
}

/// Largest rotation (radians) applied to the bulge kernel under twist.
const MAX_TWIST_BIAS: f64 = 0.3;

/// Adds the volume-conserving bulge around the contact region.
///
/// A fraction `flow_fraction` of the displaced volume is spread over the
/// non-contact pixels with weight `exp(-d / flow_radius)`, where `d` is the
/// distance to the contact region after translating the distance field by
/// `min(|drag|, flow_radius)` along the drag and rotating it about the
/// contact center by `min(|twist|, 0.3)` in the twist direction.
pub fn flow(
    pre: &ThicknessField,
    gel: &GelSpec,
    contact: &ContactState,
    scale: PixelScale,
) -> ThicknessField {
    let (w, h) = pre.dims();
    let area = scale.pixel_area();
    let s = scale.mm_per_pixel();
    let src = pre.data();
    let in_contact: Vec<bool> = src.iter().map(|&t| t < gel.h0).collect();
    let displaced: f64 = src.iter().map(|&t| (gel.h0 - t).max(0.0)).sum::<f64>() * area;
    if displaced == 0.0 || gel.flow_fraction == 0.0 {
        return pre.clone();
    }

    let dist = distance_to_region(&in_contact, w, h);
    let drag_len = contact.drag[0].hypot(contact.drag[1]);
    let shift = if drag_len > 0.0 {
        let m = drag_len.min(gel.flow_radius) / s / drag_len;
        [contact.drag[0] * m, contact.drag[1] * m]
    } else {
        [0.0, 0.0]
    };
    let theta = contact.twist.signum() * contact.twist.abs().min(MAX_TWIST_BIAS);
    let biased = shift != [0.0, 0.0] || theta != 0.0;
    let (sin, cos) = (-theta).sin_cos();
    let [cx, cy] = contact.center;

    let mut kernel = vec![0.0; w * h];
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if in_contact[i] {
                continue;
            }
            let d_px = if biased {
                let (rx, ry) = (x as f64 - cx, y as f64 - cy);
                let qx = cos * rx - sin * ry + cx - shift[0];
                let qy = sin * rx + cos * ry + cy - shift[1];
                bilinear_clamped(&dist, w, h, qx, qy)
            } else {
                dist[i]
            };
            let k = (-d_px * s / gel.flow_radius).exp();
            kernel[i] = k;
            total += k;
        }
    }
    let mut out = src.to_vec();
    if total > 0.0 {
        let gain = gel.flow_fraction * displaced / (total * area);
        for (o, k) in out.iter_mut().zip(&kernel) {
            *o += gain * k;
        }
    }
    ThicknessField::from_raw_unchecked(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gelsim::{procedural_object, ObjectShape, ObjectSpec};
    use crate::error::Error;

    fn scale() -> PixelScale {
        PixelScale::new(0.05).unwrap()
    }

    fn sphere(r: f64) -> HeightField {
        procedural_object(&ObjectSpec::new(ObjectShape::Sphere { radius: r }, 0.05), 0).unwrap()
    }

    #[test]
    fn zero_press_is_uniform() {
        let gel = GelSpec::default();
        let t = indent(&gel, &sphere(4.0), &ContactState::press([50.0, 40.0], 0.0), scale(), (101, 81))
            .unwrap();
        assert!(t.data().iter().all(|&v| v == gel.h0));
    }

    #[test]
    fn punch_through_rejected() {
        let gel = GelSpec::default();
        let err = indent(&gel, &sphere(4.0), &ContactState::press([5.0, 5.0], 5.0), scale(), (10, 10));
        assert!(matches!(err, Err(Error::PunchThrough { .. })));
    }

    #[test]
    fn flat_cylinder_is_piecewise_constant() {
        let gel = GelSpec::default();
        let cyl = procedural_object(&ObjectSpec::new(ObjectShape::Cylinder { radius: 2.0 }, 0.05), 0)
            .unwrap();
        let t = indent(&gel, &cyl, &ContactState::press([60.0, 60.0], 0.7), scale(), (121, 121))
            .unwrap();
        for &v in t.data() {
            assert!(v == gel.h0 || (v - (gel.h0 - 0.7)).abs() < 1e-12);
        }
        assert!((t.get(60, 60) - 4.3).abs() < 1e-12);
        assert_eq!(t.get(0, 0), gel.h0);
    }

    #[test]
    fn tilted_pose_keeps_deepest_point_at_press_depth() {
        // a flat face tilted by 0.1 along x: penetration falls linearly
        // from press_depth at the low (left) edge
        let gel = GelSpec::default();
        let cyl = procedural_object(&ObjectSpec::new(ObjectShape::Cylinder { radius: 2.0 }, 0.05), 0)
            .unwrap();
        let contact = ContactState { tilt: [0.1, 0.0], ..ContactState::press([60.0, 60.0], 0.7) };
        let p = penetration(&indent(&gel, &cyl, &contact, scale(), (121, 121)).unwrap(), &gel);
        let deepest = p.data().iter().cloned().fold(0.0, f64::max);
        assert!((deepest - 0.7).abs() < 1e-9);
        assert!((p.get(60, 60) - (0.7 - 0.1 * 2.0)).abs() < 1e-9);
        assert!((p.get(50, 60) - p.get(70, 60) - 0.1 * 1.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_tilt_rejected() {
        let c = ContactState { tilt: [0.6, 0.0], ..ContactState::press([1.0, 1.0], 0.1) };
        assert!(c.validate(&GelSpec::default()).is_err());
    }

    #[test]
    fn sphere_penetration_matches_geometry() {
        // brute-force sphere/plane intersection per pixel
        let gel = GelSpec::default();
        let (r, d) = (4.0, 1.0);
        let t = indent(&gel, &sphere(r), &ContactState::press([100.0, 90.0], d), scale(), (201, 181))
            .unwrap();
        for y in 0..181 {
            for x in 0..201 {
                let dx = (x as f64 - 100.0) * 0.05;
                let dy = (y as f64 - 90.0) * 0.05;
                let rr = (dx * dx + dy * dy).sqrt();
                let expect = if rr < r { ((r * r - rr * rr).sqrt() - (r - d)).max(0.0) } else { 0.0 };
                let got = gel.h0 - t.get(x, y);
                assert!((got - expect).abs() < 1e-9, "({x},{y}) {got} vs {expect}");
            }
        }
    }

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (23, 17);
        let region: Vec<bool> = (0..w * h).map(|i| i % 37 == 5 || i == 200).collect();
        let d = distance_to_region(&region, w, h);
        for y in 0..h {
            for x in 0..w {
                let mut best = f64::INFINITY;
                for (j, &r) in region.iter().enumerate() {
                    if r {
                        let (px, py) = ((j % w) as f64, (j / w) as f64);
                        best = best.min(((x as f64 - px).powi(2) + (y as f64 - py).powi(2)).sqrt());
                    }
                }
                assert!((d[y * w + x] - best).abs() < 1e-9);
            }
        }
        assert!(distance_to_region(&[false; 6], 3, 2).iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn no_contact_flow_is_identity() {
        let gel = GelSpec::default();
        let t = ThicknessField::uniform(30, 20, gel.h0).unwrap();
        assert_eq!(flow(&t, &gel, &ContactState::default(), scale()), t);
    }

    #[test]
    fn symmetric_press_gives_symmetric_bulge() {
        let gel = GelSpec::default();
        let c = ContactState::press([60.0, 50.0], 0.8);
        let pre = indent(&gel, &sphere(3.0), &c, scale(), (121, 101)).unwrap();
        let post = flow(&pre, &gel, &c, scale());
        let b = |x: usize, y: usize| post.get(x, y) - pre.get(x, y);
        for y in 0..101 {
            for x in 0..121 {
                assert!((b(x, y) - b(120 - x, y)).abs() < 1e-9);
                assert!((b(x, y) - b(x, 100 - y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bulge_volume_is_conserved_fraction() {
        let gel = GelSpec::default();
        let mut c = ContactState::press([70.0, 45.0], 1.2);
        c.drag = [0.4, -0.9];
        c.twist = 0.2;
        let pre = indent(&gel, &sphere(2.5), &c, scale(), (140, 100)).unwrap();
        let post = flow(&pre, &gel, &c, scale());
        let a = scale().pixel_area();
        let displaced: f64 = pre.data().iter().map(|t| gel.h0 - t).sum::<f64>() * a;
        let bulge: f64 =
            post.data().iter().zip(pre.data()).map(|(p, q)| p - q).sum::<f64>() * a;
        assert!((bulge - gel.flow_fraction * displaced).abs() <= 1e-6 * displaced);
        // contact region untouched
        for (p, q) in post.data().iter().zip(pre.data()) {
            if *q < gel.h0 {
                assert_eq!(p, q);
            }
        }
    }
}
