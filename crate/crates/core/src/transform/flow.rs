use serde::{Deserialize, Serialize};

use super::grid::VectorGrid;
use super::Direction;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const DEFAULT_EULER_STEPS: usize = 16;

/// Stationary velocity field: the sum of a coarse and a fine trilinear grid,
/// integrated over unit time with explicit Euler steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub coarse: VectorGrid,
    pub fine: VectorGrid,
    pub steps: usize,
}

impl FlowField {
    /// Zero field over `[lo, hi]` with the given fine spacing; the coarse grid
    /// is `coarse_factor` times coarser.
    pub fn zeros(lo: Vec3, hi: Vec3, fine_spacing: Vec3, coarse_factor: f64) -> Self {
        FlowField {
            coarse: VectorGrid::covering(lo, hi, fine_spacing * coarse_factor),
            fine: VectorGrid::covering(lo, hi, fine_spacing),
            steps: DEFAULT_EULER_STEPS,
        }
    }

    #[inline]
    pub fn velocity(&self, x: &Vec3) -> Vec3 {
        self.coarse.sample(x) + self.fine.sample(x)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn integrate(&self, x: &Vec3, dir: Direction) -> Result<Vec3> {
        let h = dir.sign() * self.dt();
        let mut p = *x;
        for step in 0..self.steps {
            p += self.velocity(&p) * h;
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::NonFinite { step });
            }
        }
        Ok(p)
    }

    /// Like [`Self::integrate`] but records the position before every step.
    pub fn integrate_recorded(&self, x: &Vec3, dir: Direction, trail: &mut Vec<Vec3>) -> Result<Vec3> {
        let h = dir.sign() * self.dt();
        trail.clear();
        let mut p = *x;
        for step in 0..self.steps {
            trail.push(p);
            p += self.velocity(&p) * h;
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::NonFinite { step });
            }
        }
        Ok(p)
    }

    /// Largest velocity magnitude measured in fine-grid cells.
    pub fn max_speed_in_fine_cells(&self) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..self.fine.dims[2] {
            for j in 0..self.fine.dims[1] {
                for i in 0..self.fine.dims[0] {
                    let v = self.velocity(&self.fine.node_position(i, j, k));
                    m = m.max(v.norm());
                }
            }
        }
        m / self.fine.min_spacing()
    }
}
