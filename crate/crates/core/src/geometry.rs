//! The canonical (pre-deformation) scroll: an Archimedean spiral extruded
//! along z, plus the angle and radius coordinates defined on it.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// A point in canonical space.
pub type CanonicalPoint = Vec3;

/// Winding handedness seen along +z.
///
/// `Anticlockwise` is the sense `(cos θ, -sin θ)`; `Clockwise` flips the sign
/// of y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winding {
    Anticlockwise,
    Clockwise,
}

impl Winding {
    /// Sign applied to the y component of a spiral point.
    #[inline]
    pub fn y_sign(self) -> f64 {
        match self {
            Winding::Anticlockwise => -1.0,
            Winding::Clockwise => 1.0,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Winding::Anticlockwise => 0,
            Winding::Clockwise => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Winding::Anticlockwise),
            1 => Some(Winding::Clockwise),
            _ => None,
        }
    }
}

/// Geometry of the canonical rolled sheet. Radius grows by `rho` per radian,
/// so successive windings are `2π·rho` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub rho: f64,
    pub theta_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub direction: Winding,
}

impl SpiralParams {
    pub fn new(rho: f64, theta_max: f64, z_min: f64, z_max: f64, direction: Winding) -> Result<Self> {
        let p = SpiralParams {
            rho,
            theta_max,
            z_min,
            z_max,
            direction,
        };
        p.validate()?;
        Ok(p)
    }

    /// Spiral with the given winding spacing and number of windings.
    pub fn from_spacing(spacing: f64, windings: f64, z_min: f64, z_max: f64) -> Result<Self> {
        Self::new(spacing / TAU, windings * TAU, z_min, z_max, Winding::Anticlockwise)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.rho, self.theta_max, self.z_min, self.z_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.rho <= 0.0 || self.theta_max <= 0.0 || self.z_min >= self.z_max {
            return Err(Error::Domain(format!("invalid spiral parameters {self:?}")));
        }
        Ok(())
    }

    /// Radial distance between successive windings.
    #[inline]
    pub fn spacing(&self) -> f64 {
        TAU * self.rho
    }

    #[inline]
    pub fn windings(&self) -> f64 {
        self.theta_max / TAU
    }

    /// Radius of the outermost point of the spiral.
    pub fn outer_radius(&self) -> f64 {
        self.rho * self.theta_max
    }

    /// In-plane angle φ ∈ [0, 2π) in the winding sense, or `None` on the axis.
    #[inline]
    pub fn angle(&self, p: &Vec3) -> Option<f64> {
        if p.x == 0.0 && p.y == 0.0 {
            return None;
        }
        let a = (self.direction.y_sign() * p.y).atan2(p.x);
        Some(if a < 0.0 { a + TAU } else { a })
    }

    /// Gradient of [`Self::angle`] with respect to (x, y).
    #[inline]
    pub(crate) fn angle_grad(&self, p: &Vec3) -> (f64, f64) {
        let s = self.direction.y_sign();
        let r2 = p.x * p.x + p.y * p.y;
        (-s * p.y / r2, s * p.x / r2)
    }
}

/// Point on the canonical surface at spiral angle `theta` and height `z`.
pub fn spiral_point(theta: f64, z: f64, params: &SpiralParams) -> Result<CanonicalPoint> {
    if !(theta > 0.0 && theta <= params.theta_max) {
        return Err(Error::Domain(format!(
            "theta {theta} outside (0, {}]",
            params.theta_max
        )));
    }
    if !(z > params.z_min && z < params.z_max) {
        return Err(Error::Domain(format!(
            "z {z} outside ({}, {})",
            params.z_min, params.z_max
        )));
    }
    Ok(spiral_point_unchecked(theta, z, params))
}

/// [`spiral_point`] without range checks; valid for any θ ≥ 0 and z.
#[inline]
pub fn spiral_point_unchecked(theta: f64, z: f64, params: &SpiralParams) -> CanonicalPoint {
    let r = params.rho * theta;
    Vec3::new(
        r * theta.cos(),
        params.direction.y_sign() * r * theta.sin(),
        z,
    )
}

/// Continuing radius: xy-radius minus `rho·φ`. Constant along a winding and a
/// multiple of the spacing on exact spiral points.
pub fn radius_coordinate(p: &CanonicalPoint, params: &SpiralParams) -> Result<f64> {
    let phi = params.angle(p).ok_or(Error::DegenerateAngle)?;
    Ok(p.xy().norm() - params.rho * phi)
}

/// Nearest multiple of the winding spacing to `r`.
pub fn nearest_winding_radius(r: f64, params: &SpiralParams) -> f64 {
    let spacing = params.spacing();
    let k = (r / spacing).floor();
    let m = r - k * spacing;
    if m < 0.5 * spacing {
        k * spacing
    } else {
        (k + 1.0) * spacing
    }
}

/// Shifts `angle` by a multiple of 2π so it lies within π of `reference`.
#[inline]
pub fn unwrap_near(angle: f64, reference: f64) -> f64 {
    angle + TAU * ((reference - angle) / TAU).round()
}

/// Sequentially unwraps a sequence of angles so successive values differ by
/// at most π.
pub fn unwrap_sequence(angles: &mut [f64]) {
    for i in 1..angles.len() {
        let prev = angles[i - 1];
        let d = angles[i] - prev;
        if d.abs() > PI {
            angles[i] = unwrap_near(angles[i], prev);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(rho: f64) -> SpiralParams {
        SpiralParams::new(rho, 20.0 * TAU, -100.0, 100.0, Winding::Anticlockwise).unwrap()
    }

    #[test]
    fn spiral_point_examples() {
        let p = spiral_point(1e-12, 5.0, &params(1.0)).unwrap();
        assert!(p.x.abs() < 1e-11 && p.y.abs() < 1e-11);
        assert_eq!(p.z, 5.0);

        let p = spiral_point(TAU, 0.0, &params(1.0)).unwrap();
        assert_relative_eq!(p.x, TAU, epsilon = 1e-12);
        assert!(p.y.abs() < 1e-12);

        // radius rho·θ = π at θ = π/2
        let p = spiral_point(PI / 2.0, 3.0, &params(2.0)).unwrap();
        assert!(p.x.abs() < 1e-12);
        assert_relative_eq!(p.y, -PI, epsilon = 1e-12);
        assert_eq!(p.z, 3.0);
    }

    #[test]
    fn spiral_point_rejects_out_of_range() {
        let sp = params(1.0);
        assert!(spiral_point(0.0, 0.0, &sp).is_err());
        assert!(spiral_point(sp.theta_max + 0.1, 0.0, &sp).is_err());
        assert!(spiral_point(1.0, 100.0, &sp).is_err());
        assert!(spiral_point(1.0, -100.0, &sp).is_err());
    }

    #[test]
    fn clockwise_flips_y_only() {
        let mut sp = params(1.5);
        let a = spiral_point(2.0, 1.0, &sp).unwrap();
        sp.direction = Winding::Clockwise;
        let b = spiral_point(2.0, 1.0, &sp).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, -b.y);
        assert_relative_eq!(radius_coordinate(&b, &sp).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn radius_coordinate_examples() {
        let sp = params(1.0);
        let p = spiral_point(4.0 * PI, 2.0, &sp).unwrap();
        // rho·θ − rho·(θ mod 2π) with θ = 4π
        let oracle = 4.0 * PI - (4.0 * PI).rem_euclid(TAU);
        let r = radius_coordinate(&p, &sp).unwrap();
        // θ = 4π sits on the seam; φ may round to 0 or to 2π⁻
        assert!((r - oracle).abs() < 1e-9 || (r - (oracle - TAU)).abs() < 1e-9);

        assert_relative_eq!(radius_coordinate(&Vec3::new(1.0, 0.0, 0.0), &sp).unwrap(), 1.0);

        let sp = params(2.0 / PI);
        let r = radius_coordinate(&Vec3::new(0.0, -1.0, 0.0), &sp).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn radius_coordinate_rejects_axis() {
        let sp = params(1.0);
        assert!(matches!(
            radius_coordinate(&Vec3::new(0.0, 0.0, 3.0), &sp),
            Err(Error::DegenerateAngle)
        ));
    }

    /// Exhaustive search over k·2π·rho for the nearest winding.
    fn nearest_oracle(r: f64, rho: f64) -> f64 {
        (0..=10)
            .map(|k| k as f64 * TAU * rho)
            .min_by(|a, b| (a - r).abs().partial_cmp(&(b - r).abs()).unwrap())
            .unwrap()
    }

    #[test]
    fn nearest_winding_examples() {
        let sp = params(1.0);
        for r in [6.5, 3.0, 3.2] {
            assert_relative_eq!(nearest_winding_radius(r, &sp), nearest_oracle(r, 1.0), epsilon = 1e-12);
        }
        assert_relative_eq!(nearest_winding_radius(6.5, &sp), TAU, epsilon = 1e-12);
        assert_eq!(nearest_winding_radius(3.0, &sp), 0.0);
        assert_relative_eq!(nearest_winding_radius(3.2, &sp), TAU, epsilon = 1e-12);
    }

    #[test]
    fn unwrap_sequence_crosses_seam() {
        let mut a = vec![6.0, 6.2, 0.1, 0.3];
        unwrap_sequence(&mut a);
        assert_relative_eq!(a[2], 0.1 + TAU);
        assert_relative_eq!(a[3], 0.3 + TAU);
    }

    proptest! {
        #[test]
        fn radius_of_spiral_point_is_quantized(theta in 0.01f64..(20.0 * TAU), z in -99.0f64..99.0, rho in 0.1f64..5.0) {
            let sp = params(rho);
            let p = spiral_point(theta, z, &sp).unwrap();
            let r = radius_coordinate(&p, &sp).unwrap();
            let expect = rho * TAU * (theta / TAU).floor();
            // seam: φ may land on either side of 2π
            let ok = (r - expect).abs() <= 1e-9 * expect.max(1.0)
                || (r - (expect - TAU * rho)).abs() <= 1e-9 * expect.max(1.0)
                || (r - (expect + TAU * rho)).abs() <= 1e-9 * expect.max(1.0);
            prop_assert!(ok);
            if (theta / TAU).fract() > 1e-6 && (theta / TAU).fract() < 1.0 - 1e-6 {
                prop_assert!((r - expect).abs() <= 1e-9 * expect.max(1.0));
            }
        }

        #[test]
        fn nearest_winding_is_idempotent_and_close(r in 0.0f64..500.0, rho in 0.1f64..5.0) {
            let sp = params(rho);
            let s = nearest_winding_radius(r, &sp);
            prop_assert_eq!(nearest_winding_radius(s, &sp), s);
            prop_assert!((r - s).abs() <= PI * rho + 1e-9);
            let k = s / sp.spacing();
            prop_assert!((k - k.round()).abs() < 1e-9);
        }

        #[test]
        fn spiral_point_injective(t1 in 0.01f64..100.0, t2 in 0.01f64..100.0, z1 in -99.0f64..99.0, z2 in -99.0f64..99.0) {
            let sp = params(1.0);
            prop_assume!((t1 - t2).abs() > 1e-6 || (z1 - z2).abs() > 1e-6);
            let a = spiral_point(t1, z1, &sp).unwrap();
            let b = spiral_point(t2, z2, &sp).unwrap();
            prop_assert!((a - b).norm() > 1e-9);
        }
    }
}
