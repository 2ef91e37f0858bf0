use crate::image::{DepthMap, PixelScale, Wrench};

use super::{ContactState, GelSpec};

/// Winkler-foundation wrench for a penetration field.
///
/// Normal pressure is `k_n * p`; shear is `k_s * drag` over the contact area;
/// twist torque is `k_s * twist * ∫ r² dA` about the contact's area centroid.
/// Normal force is negative in compression. Torques are in N·m.
pub fn synthesize_wrench(
    penetration: &DepthMap,
    gel: &GelSpec,
    contact: &ContactState,
    scale: PixelScale,
) -> Wrench {
    let s = scale.mm_per_pixel();
    let area = scale.pixel_area();
    let w = penetration.width();

    let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
    for (i, &p) in penetration.data().iter().enumerate() {
        if p > 0.0 {
            n += 1;
            sx += (i % w) as f64 * s;
            sy += (i / w) as f64 * s;
        }
    }
    if n == 0 {
        return Wrench::default();
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);

    let (mut load, mut mom_x, mut mom_y, mut polar) = (0.0, 0.0, 0.0, 0.0);
    for (i, &p) in penetration.data().iter().enumerate() {
        if p > 0.0 {
            let dx = (i % w) as f64 * s - mx;
            let dy = (i / w) as f64 * s - my;
            let f = gel.k_n * p * area;
            load += f;
            mom_x += f * dy;
            mom_y -= f * dx;
            polar += (dx * dx + dy * dy) * area;
        }
    }
    let contact_area = n as f64 * area;
    const MM_TO_M: f64 = 1e-3;
    Wrench {
        fx: gel.k_s * contact.drag[0] * contact_area,
        fy: gel.k_s * contact.drag[1] * contact_area,
        fz: -load,
        tx: mom_x * MM_TO_M,
        ty: mom_y * MM_TO_M,
        tz: gel.k_s * contact.twist * polar * MM_TO_M,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn disk(a_mm: f64, p: f64, s: f64) -> DepthMap {
        let n = (2.0 * a_mm / s) as usize + 21;
        let c = (n - 1) as f64 / 2.0;
        DepthMap::from_fn(n, n, |x, y| {
            let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt() * s;
            if r <= a_mm {
                p
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn no_contact_zero_wrench() {
        let w = synthesize_wrench(
            &DepthMap::zeros(10, 10),
            &GelSpec::default(),
            &ContactState::default(),
            PixelScale::DEFAULT,
        );
        assert_eq!(w, Wrench::default());
    }

    #[test]
    fn flat_disk_normal_force() {
        let gel = GelSpec::default();
        let s = 0.02;
        let w = synthesize_wrench(&disk(3.0, 0.5, s), &gel, &ContactState::default(), PixelScale::new(s).unwrap());
        let closed = -gel.k_n * 0.5 * PI * 9.0;
        assert!((closed + 0.5655).abs() < 1e-4);
        assert!(((w.fz - closed) / closed).abs() < 0.02);
        for v in [w.fx, w.fy, w.tx, w.ty, w.tz] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn twist_torque_matches_polar_moment() {
        let gel = GelSpec::default();
        let s = 0.02;
        let c = ContactState { twist: 0.1, ..Default::default() };
        let w = synthesize_wrench(&disk(3.0, 0.5, s), &gel, &c, PixelScale::new(s).unwrap());
        let closed = gel.k_s * 0.1 * (PI * 3.0f64.powi(4) / 2.0) * 1e-3;
        assert!(((w.tz - closed) / closed).abs() < 0.02, "{} vs {}", w.tz, closed);
    }
}
