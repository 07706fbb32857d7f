use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Regular 3D lattice of velocity vectors, x-fastest row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorGrid {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub dims: [usize; 3],
    pub data: Vec<Vec3>,
}

/// Trilinear interpolation stencil: eight node indices, their weights and
/// the spatial gradient of each weight.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    pub dw: [Vec3; 8],
}

/// Per-axis lower index, fraction and d(fraction)/dx. Queries outside the
/// lattice clamp to the edge, where the derivative is zero.
#[inline]
fn axis(x: f64, origin: f64, h: f64, n: usize) -> (usize, usize, f64, f64) {
    if n == 1 {
        return (0, 0, 0.0, 0.0);
    }
    let u = (x - origin) / h;
    let last = (n - 1) as f64;
    if u <= 0.0 {
        (0, 1, 0.0, 0.0)
    } else if u >= last {
        (n - 2, n - 1, 1.0, 0.0)
    } else {
        // u > 0, so truncation is floor
        let i0 = (u as usize).min(n - 2);
        (i0, i0 + 1, u - i0 as f64, 1.0 / h)
    }
}

impl VectorGrid {
    pub fn zeros(origin: Vec3, spacing: Vec3, dims: [usize; 3]) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "grid dims must be positive");
        VectorGrid {
            origin,
            spacing,
            dims,
            data: vec![Vec3::zeros(); dims[0] * dims[1] * dims[2]],
        }
    }

    /// Grid covering the box `[lo, hi]` with at most `spacing` between nodes
    /// along each axis.
    pub fn covering(lo: Vec3, hi: Vec3, spacing: Vec3) -> Self {
        let mut dims = [1usize; 3];
        let mut h = spacing;
        for a in 0..3 {
            let extent = (hi[a] - lo[a]).max(0.0);
            let cells = (extent / spacing[a]).ceil().max(1.0) as usize;
            dims[a] = cells + 1;
            h[a] = if extent > 0.0 { extent / cells as f64 } else { spacing[a] };
        }
        VectorGrid::zeros(lo, h, dims)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                i as f64 * self.spacing.x,
                j as f64 * self.spacing.y,
                k as f64 * self.spacing.z,
            )
    }

    /// Upper corner of the lattice.
    pub fn extent_max(&self) -> Vec3 {
        self.node_position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn stencil(&self, x: &Vec3) -> Stencil {
        let (x0, x1, fx, dfx) = axis(x.x, self.origin.x, self.spacing.x, self.dims[0]);
        let (y0, y1, fy, dfy) = axis(x.y, self.origin.y, self.spacing.y, self.dims[1]);
        let (z0, z1, fz, dfz) = axis(x.z, self.origin.z, self.spacing.z, self.dims[2]);
        let wx = [1.0 - fx, fx];
        let wy = [1.0 - fy, fy];
        let wz = [1.0 - fz, fz];
        let dx = [-dfx, dfx];
        let dy = [-dfy, dfy];
        let dz = [-dfz, dfz];
        let xs = [x0, x1];
        let ys = [y0, y1];
        let zs = [z0, z1];
        let mut idx = [0usize; 8];
        let mut w = [0.0; 8];
        let mut dw = [Vec3::zeros(); 8];
        for c in 0..8 {
            let (a, b, k) = (c & 1, (c >> 1) & 1, c >> 2);
            idx[c] = self.index(xs[a], ys[b], zs[k]);
            let wyz = wy[b] * wz[k];
            w[c] = wx[a] * wyz;
            dw[c] = Vec3::new(dx[a] * wyz, wx[a] * dy[b] * wz[k], wx[a] * wy[b] * dz[k]);
        }
        Stencil { idx, w, dw }
    }

    #[inline]
    pub fn sample(&self, x: &Vec3) -> Vec3 {
        let (x0, x1, fx, _) = axis(x.x, self.origin.x, self.spacing.x, self.dims[0]);
        let (y0, y1, fy, _) = axis(x.y, self.origin.y, self.spacing.y, self.dims[1]);
        let (z0, z1, fz, _) = axis(x.z, self.origin.z, self.spacing.z, self.dims[2]);
        let d = &self.data;
        let lerp_x = |j: usize, k: usize| d[self.index(x0, j, k)] * (1.0 - fx) + d[self.index(x1, j, k)] * fx;
        let at_z = |k: usize| lerp_x(y0, k) * (1.0 - fy) + lerp_x(y1, k) * fy;
        at_z(z0) * (1.0 - fz) + at_z(z1) * fz
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Smallest node spacing over the three axes.
    pub fn min_spacing(&self) -> f64 {
        self.spacing.x.min(self.spacing.y).min(self.spacing.z)
    }
}
