//! Inter-winding gap scaling.
//!
//! A 2D lattice of log-scales over (spiral angle θ, z) multiplies the radial
//! spacing of each gap. The remap of the continuing radius is cumulative, so
//! it stays continuous and strictly increasing across winding boundaries.
//! Lattice node `i` sits at θ = (i + 1)·θ_max / n_θ; an implicit zero node at
//! θ = 0 keeps the remap continuous across the φ = 0 seam.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geometry::{SpiralParams, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapField {
    /// (n_theta, n_z)
    pub dims: [usize; 2],
    /// Log-scales, θ fastest.
    pub values: Vec<f64>,
}

/// Bilinear stencil into the gap lattice. Entries with zero weight may point
/// at index 0.
#[derive(Debug, Clone, Copy)]
pub struct GapStencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub dw_dtheta: [f64; 4],
    pub dw_dz: [f64; 4],
}

impl GapStencil {
    #[inline]
    pub fn eval(&self, values: &[f64]) -> (f64, f64, f64) {
        let mut g = 0.0;
        let mut gt = 0.0;
        let mut gz = 0.0;
        for c in 0..4 {
            let v = values[self.idx[c]];
            g += v * self.w[c];
            gt += v * self.dw_dtheta[c];
            gz += v * self.dw_dz[c];
        }
        (g, gt, gz)
    }
}

/// Record of an inverse remap, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct GapInverse {
    pub phi: f64,
    /// Continuing radius on input.
    pub r_in: f64,
    /// Segment index the input fell into.
    pub k: usize,
    /// Σ_{j<k} factor_j
    pub cum: f64,
    /// Per-gap stencils and factors for j = 0..=k.
    pub stencils: Vec<GapStencil>,
    pub factors: Vec<f64>,
}

impl GapField {
    pub fn identity(n_theta: usize, n_z: usize) -> Self {
        assert!(n_theta >= 1 && n_z >= 1);
        GapField {
            dims: [n_theta, n_z],
            values: vec![0.0; n_theta * n_z],
        }
    }

    /// Default lattice: `per_winding` θ nodes per winding.
    pub fn for_spiral(spiral: &SpiralParams, per_winding: usize, n_z: usize) -> Self {
        let n_theta = ((spiral.windings() * per_winding as f64).ceil() as usize).max(1);
        Self::identity(n_theta, n_z)
    }

    #[inline]
    pub fn index(&self, it: usize, iz: usize) -> usize {
        it + self.dims[0] * iz
    }

    pub fn stencil(&self, theta: f64, z: f64, spiral: &SpiralParams) -> GapStencil {
        let [nt, nz] = self.dims;
        let h = spiral.theta_max / nt as f64;
        // θ axis: lattice coordinate t, node i at t = i + 1, implicit zero at t = 0
        let t = theta / h;
        let (lo, hi, ft, dft) = if t <= 0.0 {
            (None, None, 0.0, 0.0)
        } else if t >= nt as f64 {
            (Some(nt - 1), None, 0.0, 0.0)
        } else {
            let fl = t.floor();
            let l = fl as usize;
            let lo = if l == 0 { None } else { Some(l - 1) };
            let hi = if l < nt { Some(l) } else { None };
            (lo, hi, t - fl, 1.0 / h)
        };
        let (z0, z1, fz, dfz) = if nz == 1 {
            (0, 0, 0.0, 0.0)
        } else {
            let dz = (spiral.z_max - spiral.z_min) / (nz - 1) as f64;
            let u = (z - spiral.z_min) / dz;
            if u <= 0.0 {
                (0, 1, 0.0, 0.0)
            } else if u >= (nz - 1) as f64 {
                (nz - 2, nz - 1, 1.0, 0.0)
            } else {
                let l = (u.floor() as usize).min(nz - 2);
                (l, l + 1, u - l as f64, 1.0 / dz)
            }
        };
        let mut st = GapStencil {
            idx: [0; 4],
            w: [0.0; 4],
            dw_dtheta: [0.0; 4],
            dw_dz: [0.0; 4],
        };
        let mut c = 0;
        for (iz, wz, dwz) in [(z0, 1.0 - fz, -dfz), (z1, fz, dfz)] {
            for (it, wt, dwt) in [(lo, 1.0 - ft, -dft), (hi, ft, dft)] {
                if let Some(it) = it {
                    st.idx[c] = self.index(it, iz);
                    st.w[c] = wt * wz;
                    st.dw_dtheta[c] = dwt * wz;
                    st.dw_dz[c] = wt * dwz;
                }
                c += 1;
            }
        }
        st
    }

    /// Log-scale at spiral coordinate θ and height z.
    pub fn log_scale(&self, theta: f64, z: f64, spiral: &SpiralParams) -> f64 {
        self.stencil(theta, z, spiral).eval(&self.values).0
    }

    #[inline]
    fn factor(&self, j: usize, phi: f64, z: f64, spiral: &SpiralParams) -> f64 {
        self.log_scale(TAU * j as f64 + phi, z, spiral).exp()
    }

    pub fn forward(&self, p: &Vec3, spiral: &SpiralParams) -> Vec3 {
        let Some(phi) = spiral.angle(p) else {
            return *p;
        };
        let radius = p.xy().norm();
        let r = radius - spiral.rho * phi;
        if r <= 0.0 {
            return *p;
        }
        let spacing = spiral.spacing();
        let k = (r / spacing).floor() as usize;
        let m = r - k as f64 * spacing;
        let mut out = 0.0;
        for j in 0..k {
            out += spacing * self.factor(j, phi, p.z, spiral);
        }
        out += m * self.factor(k, phi, p.z, spiral);
        let scale = (spiral.rho * phi + out) / radius;
        Vec3::new(p.x * scale, p.y * scale, p.z)
    }

    /// Locates the segment of the cumulative remap containing `q`.
    pub fn inverse_record(&self, q: &Vec3, spiral: &SpiralParams) -> Option<GapInverse> {
        let phi = spiral.angle(q)?;
        let r_in = q.xy().norm() - spiral.rho * phi;
        if r_in <= 0.0 {
            return None;
        }
        let spacing = spiral.spacing();
        let mut rec = GapInverse {
            phi,
            r_in,
            k: 0,
            cum: 0.0,
            stencils: Vec::new(),
            factors: Vec::new(),
        };
        loop {
            let j = rec.factors.len();
            let st = self.stencil(TAU * j as f64 + phi, q.z, spiral);
            let f = st.eval(&self.values).0.exp();
            rec.stencils.push(st);
            rec.factors.push(f);
            if spacing * (rec.cum + f) > r_in {
                rec.k = j;
                return Some(rec);
            }
            rec.cum += f;
        }
    }

    pub fn inverse(&self, q: &Vec3, spiral: &SpiralParams) -> Vec3 {
        match self.inverse_record(q, spiral) {
            None => *q,
            Some(rec) => {
                let radius = q.xy().norm();
                let out = inverse_radius(&rec, spiral);
                let scale = out / radius;
                Vec3::new(q.x * scale, q.y * scale, q.z)
            }
        }
    }
}

/// Output xy-radius of an inverse remap.
#[inline]
pub fn inverse_radius(rec: &GapInverse, spiral: &SpiralParams) -> f64 {
    let spacing = spiral.spacing();
    let fk = rec.factors[rec.k];
    spiral.rho * rec.phi + spacing * rec.k as f64 + (rec.r_in - spacing * rec.cum) / fk
}
