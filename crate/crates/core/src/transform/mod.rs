//! The canonical-to-scan diffeomorphism `T_aff ∘ T_flow ∘ T_gap` and its
//! inverse.

mod affine;
mod flow;
mod gap;
mod grid;

pub use affine::{AffineAt, AffineKeypoint, PerSliceAffine};
pub use flow::{FlowField, DEFAULT_EULER_STEPS};
pub use gap::{inverse_radius, GapField, GapInverse, GapStencil};
pub use grid::{Stencil, VectorGrid};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{CanonicalPoint, SpiralParams, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Inverse => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedTransform {
    pub spiral: SpiralParams,
    pub affine: PerSliceAffine,
    pub flow: FlowField,
    pub gap: GapField,
}

/// Lattice resolutions used when building a transform for a spiral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformLayout {
    pub affine_keypoints: usize,
    /// Fine flow spacing as a fraction of the domain extent per axis.
    pub fine_fraction: f64,
    pub coarse_factor: f64,
    pub gap_per_winding: usize,
    pub gap_z_nodes: usize,
    pub euler_steps: usize,
}

impl Default for TransformLayout {
    fn default() -> Self {
        TransformLayout {
            affine_keypoints: 8,
            fine_fraction: 1.0 / 16.0,
            coarse_factor: 6.0,
            gap_per_winding: 8,
            gap_z_nodes: 8,
            euler_steps: DEFAULT_EULER_STEPS,
        }
    }
}

impl ComposedTransform {
    /// Identity transform whose flow grids cover the canonical box
    /// `[lo, hi]`.
    pub fn identity(spiral: SpiralParams, lo: Vec3, hi: Vec3, layout: &TransformLayout) -> Self {
        let extent = hi - lo;
        let mut flow = FlowField::zeros(lo, hi, extent * layout.fine_fraction, layout.coarse_factor);
        flow.steps = layout.euler_steps;
        ComposedTransform {
            spiral,
            affine: PerSliceAffine::identity(layout.affine_keypoints),
            flow,
            gap: GapField::for_spiral(&spiral, layout.gap_per_winding, layout.gap_z_nodes),
        }
    }

    /// Canonical box around the spiral, padded by `margin`.
    pub fn canonical_box(spiral: &SpiralParams, margin: f64) -> (Vec3, Vec3) {
        let r = spiral.outer_radius() + margin;
        (
            Vec3::new(-r, -r, spiral.z_min - margin),
            Vec3::new(r, r, spiral.z_max + margin),
        )
    }

    #[inline]
    pub fn z_range(&self) -> (f64, f64) {
        (self.spiral.z_min, self.spiral.z_max)
    }

    /// Canonical space → scan space.
    pub fn forward(&self, x: &CanonicalPoint) -> Result<Vec3> {
        let g = self.gap.forward(x, &self.spiral);
        let f = self.flow.integrate(&g, Direction::Forward)?;
        Ok(self.affine.forward(&f, self.z_range()))
    }

    /// Scan space → canonical space.
    pub fn inverse(&self, x: &Vec3) -> Result<CanonicalPoint> {
        let a = self.affine.inverse(x, self.z_range());
        let f = self.flow.integrate(&a, Direction::Inverse)?;
        Ok(self.gap.inverse(&f, &self.spiral))
    }
}

pub fn affine_apply(x: &Vec3, affine: &PerSliceAffine, z_range: (f64, f64), dir: Direction) -> Vec3 {
    match dir {
        Direction::Forward => affine.forward(x, z_range),
        Direction::Inverse => affine.inverse(x, z_range),
    }
}

pub fn flow_velocity(x: &Vec3, flow: &FlowField) -> Vec3 {
    flow.velocity(x)
}

pub fn flow_integrate(x: &Vec3, flow: &FlowField, dir: Direction) -> Result<Vec3> {
    flow.integrate(x, dir)
}

pub fn gap_apply(p: &CanonicalPoint, gap: &GapField, spiral: &SpiralParams, dir: Direction) -> CanonicalPoint {
    match dir {
        Direction::Forward => gap.forward(p, spiral),
        Direction::Inverse => gap.inverse(p, spiral),
    }
}

pub fn compose_forward(x: &CanonicalPoint, t: &ComposedTransform) -> Result<Vec3> {
    t.forward(x)
}

pub fn compose_inverse(x: &Vec3, t: &ComposedTransform) -> Result<CanonicalPoint> {
    t.inverse(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Winding;
    use approx::assert_relative_eq;

    fn base() -> ComposedTransform {
        let sp = SpiralParams::new(1.0, 4.0 * std::f64::consts::TAU, 0.0, 20.0, Winding::Anticlockwise).unwrap();
        let (lo, hi) = ComposedTransform::canonical_box(&sp, 5.0);
        ComposedTransform::identity(sp, lo, hi, &TransformLayout::default())
    }

    #[test]
    fn identity_stages_compose_to_identity() {
        let t = base();
        let x = Vec3::new(3.0, -4.0, 7.0);
        assert_relative_eq!(compose_forward(&x, &t).unwrap(), x, epsilon = 1e-12);
        assert_relative_eq!(compose_inverse(&x, &t).unwrap(), x, epsilon = 1e-12);
    }

    #[test]
    fn stages_apply_in_order() {
        let mut t = base();
        for k in &mut t.affine.keypoints {
            k.log_sx = 2f64.ln();
            k.log_sy = 2f64.ln();
        }
        let c = Vec3::new(0.5, -1.0, 0.25);
        t.flow.coarse.data.iter_mut().for_each(|v| *v = c);
        let x = Vec3::new(3.0, -4.0, 7.0);
        let y = compose_forward(&x, &t).unwrap();
        let after_flow = x + c;
        let expect = Vec3::new(2.0 * after_flow.x, 2.0 * after_flow.y, after_flow.z);
        assert_relative_eq!(y, expect, epsilon = 1e-12);
        assert_relative_eq!(compose_inverse(&y, &t).unwrap(), x, epsilon = 1e-12);
    }
}
