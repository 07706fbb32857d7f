//! Reverse-mode gradients through the transform stages.
//!
//! Each stage records what its backward pass needs (interpolation stencils
//! are recomputed from stored positions); the backward passes accumulate into
//! a dense [`ParameterGradients`] that mirrors [`ComposedTransform`].

use std::f64::consts::TAU;

use crate::error::Result;
use crate::geometry::Vec3;
use crate::transform::{inverse_radius, AffineAt, ComposedTransform, Direction, FlowField, GapInverse};

/// Gradient container shaped like the transform parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGradients {
    /// Per keypoint: (log_sx, log_sy, tx, ty).
    pub affine: Vec<[f64; 4]>,
    pub coarse: Vec<Vec3>,
    pub fine: Vec<Vec3>,
    pub gap: Vec<f64>,
    pub rho: f64,
}

impl ParameterGradients {
    pub fn zeros_like(t: &ComposedTransform) -> Self {
        ParameterGradients {
            affine: vec![[0.0; 4]; t.affine.keypoints.len()],
            coarse: vec![Vec3::zeros(); t.flow.coarse.len()],
            fine: vec![Vec3::zeros(); t.flow.fine.len()],
            gap: vec![0.0; t.gap.values.len()],
            rho: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &ParameterGradients) {
        for (a, b) in self.affine.iter_mut().zip(&other.affine) {
            for i in 0..4 {
                a[i] += b[i];
            }
        }
        for (a, b) in self.coarse.iter_mut().zip(&other.coarse) {
            *a += b;
        }
        for (a, b) in self.fine.iter_mut().zip(&other.fine) {
            *a += b;
        }
        for (a, b) in self.gap.iter_mut().zip(&other.gap) {
            *a += b;
        }
        self.rho += other.rho;
    }

    pub fn scale(&mut self, s: f64) {
        self.affine.iter_mut().flatten().for_each(|v| *v *= s);
        self.coarse.iter_mut().for_each(|v| *v *= s);
        self.fine.iter_mut().for_each(|v| *v *= s);
        self.gap.iter_mut().for_each(|v| *v *= s);
        self.rho *= s;
    }

    /// Flat view in [`ParamVector`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.affine.iter().flatten());
        out.extend(self.coarse.iter().flat_map(|v| [v.x, v.y, v.z]));
        out.extend(self.fine.iter().flat_map(|v| [v.x, v.y, v.z]));
        out.extend(&self.gap);
        out.push(self.rho);
        out
    }

    pub fn len(&self) -> usize {
        4 * self.affine.len() + 3 * self.coarse.len() + 3 * self.fine.len() + self.gap.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Flat parameter vector: affine keypoints, coarse grid, fine grid, gap
/// lattice, then rho.
pub struct ParamVector;

impl ParamVector {
    pub fn len(t: &ComposedTransform) -> usize {
        4 * t.affine.keypoints.len() + 3 * t.flow.coarse.len() + 3 * t.flow.fine.len() + t.gap.values.len() + 1
    }

    pub fn read(t: &ComposedTransform) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::len(t));
        out.extend(t.affine.keypoints.iter().flat_map(|k| k.as_array()));
        out.extend(t.flow.coarse.data.iter().flat_map(|v| [v.x, v.y, v.z]));
        out.extend(t.flow.fine.data.iter().flat_map(|v| [v.x, v.y, v.z]));
        out.extend(&t.gap.values);
        out.push(t.spiral.rho);
        out
    }

    pub fn write(t: &mut ComposedTransform, flat: &[f64]) {
        assert_eq!(flat.len(), Self::len(t), "parameter vector length mismatch");
        let mut it = flat.iter().copied();
        for k in &mut t.affine.keypoints {
            *k = crate::transform::AffineKeypoint::from_array([
                it.next().unwrap(),
                it.next().unwrap(),
                it.next().unwrap(),
                it.next().unwrap(),
            ]);
        }
        for v in t.flow.coarse.data.iter_mut().chain(t.flow.fine.data.iter_mut()) {
            *v = Vec3::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        }
        for v in &mut t.gap.values {
            *v = it.next().unwrap();
        }
        t.spiral.rho = it.next().unwrap();
    }

    /// Characteristic magnitude of each parameter: the fine grid spacing for
    /// translations and velocities, rho for rho, and 1 for log-scales.
    pub fn scales(t: &ComposedTransform) -> Vec<f64> {
        let len = t.flow.fine.min_spacing();
        let mut out: Vec<f64> = Self::length_mask(t).into_iter().map(|m| if m { len } else { 1.0 }).collect();
        *out.last_mut().unwrap() = t.spiral.rho;
        out
    }

    /// Which parameters carry length units (translations, velocities, rho).
    pub fn length_mask(t: &ComposedTransform) -> Vec<bool> {
        let mut out = Vec::with_capacity(Self::len(t));
        for _ in &t.affine.keypoints {
            out.extend([false, false, true, true]);
        }
        out.extend(std::iter::repeat_n(true, 3 * (t.flow.coarse.len() + t.flow.fine.len())));
        out.extend(std::iter::repeat_n(false, t.gap.values.len()));
        out.push(true);
        out
    }
}

/// Everything the backward pass of `T_{V→S}` needs for one point.
#[derive(Debug, Clone)]
pub struct InverseTape {
    affine: AffineAt,
    after_affine: Vec3,
    trail: Vec<Vec3>,
    after_flow: Vec3,
    gap: Option<GapInverse>,
    pub output: Vec3,
}

/// Maps a scan point to canonical space and records the intermediate state.
pub fn inverse_taped(t: &ComposedTransform, x: &Vec3) -> Result<InverseTape> {
    let z_range = t.z_range();
    let affine = t.affine.at(x.z, z_range);
    let after_affine = t.affine.inverse(x, z_range);
    let mut trail = Vec::with_capacity(t.flow.steps);
    let after_flow = t.flow.integrate_recorded(&after_affine, Direction::Inverse, &mut trail)?;
    let gap = t.gap.inverse_record(&after_flow, &t.spiral);
    let output = match &gap {
        None => after_flow,
        Some(rec) => {
            let scale = inverse_radius(rec, &t.spiral) / after_flow.xy().norm();
            Vec3::new(after_flow.x * scale, after_flow.y * scale, after_flow.z)
        }
    };
    Ok(InverseTape {
        affine,
        after_affine,
        trail,
        after_flow,
        gap,
        output,
    })
}

/// Accumulates d(loss)/d(params) given `adj` = d(loss)/d(output).
pub fn backprop_inverse(t: &ComposedTransform, tape: &InverseTape, adj: Vec3, g: &mut ParameterGradients) {
    if adj == Vec3::zeros() {
        return;
    }
    let a = backprop_gap_inverse(t, tape, adj, g);
    let a = backprop_flow(&t.flow, &tape.trail, Direction::Inverse, a, g);
    backprop_affine_inverse(&tape.affine, &tape.after_affine, a, g);
}

fn backprop_gap_inverse(t: &ComposedTransform, tape: &InverseTape, adj: Vec3, g: &mut ParameterGradients) -> Vec3 {
    let Some(rec) = &tape.gap else {
        return adj;
    };
    let sp = &t.spiral;
    let q = tape.after_flow;
    let r_in_xy = q.xy().norm();
    let u = (q.x / r_in_xy, q.y / r_in_xy);
    let out_r = inverse_radius(rec, sp);
    let spacing = sp.spacing();
    let k = rec.k;
    let fk = rec.factors[k];
    let excess = rec.r_in - spacing * rec.cum;

    // dR/df_j
    let mut d_phi = sp.rho - sp.rho / fk;
    let mut d_z = 0.0;
    let a_r = adj.x * u.0 + adj.y * u.1;
    for j in 0..=k {
        let dr_df = if j < k { -spacing / fk } else { -excess / (fk * fk) };
        let st = &rec.stencils[j];
        let (_, g_theta, g_z) = st.eval(&t.gap.values);
        let fj = rec.factors[j];
        d_phi += dr_df * fj * g_theta;
        d_z += dr_df * fj * g_z;
        let coef = a_r * dr_df * fj;
        if coef != 0.0 {
            for c in 0..4 {
                g.gap[st.idx[c]] += coef * st.w[c];
            }
        }
    }
    g.rho += a_r * (rec.phi + TAU * k as f64 - (rec.phi + TAU * rec.cum) / fk);

    let d_rin = 1.0 / fk;
    let (gpx, gpy) = sp.angle_grad(&q);
    let a_dot_u = adj.x * u.0 + adj.y * u.1;
    let s = out_r / r_in_xy;
    let ax = s * (adj.x - a_dot_u * u.0) + a_r * (d_rin * u.0 + d_phi * gpx);
    let ay = s * (adj.y - a_dot_u * u.1) + a_r * (d_rin * u.1 + d_phi * gpy);
    let az = adj.z + a_r * d_z;
    Vec3::new(ax, ay, az)
}

/// Backward pass of the Euler recursion `x_{k+1} = x_k ± dt·u(x_k)`.
pub(crate) fn backprop_flow(flow: &FlowField, trail: &[Vec3], dir: Direction, adj: Vec3, g: &mut ParameterGradients) -> Vec3 {
    let h = dir.sign() * flow.dt();
    let mut a = adj;
    for x in trail.iter().rev() {
        let mut jt = Vec3::zeros();
        let ah = a * h;
        let sc = flow.coarse.stencil(x);
        for c in 0..8 {
            let i = sc.idx[c];
            g.coarse[i] += ah * sc.w[c];
            jt += sc.dw[c] * flow.coarse.data[i].dot(&a);
        }
        let sf = flow.fine.stencil(x);
        for c in 0..8 {
            let i = sf.idx[c];
            g.fine[i] += ah * sf.w[c];
            jt += sf.dw[c] * flow.fine.data[i].dot(&a);
        }
        a += jt * h;
    }
    a
}

fn scatter_affine(at: &AffineAt, d: [f64; 4], g: &mut ParameterGradients) {
    let lo = &mut g.affine[at.lower];
    for i in 0..4 {
        lo[i] += (1.0 - at.alpha) * d[i];
    }
    let hi = &mut g.affine[at.lower + 1];
    for i in 0..4 {
        hi[i] += at.alpha * d[i];
    }
}

fn backprop_affine_inverse(at: &AffineAt, out: &Vec3, adj: Vec3, g: &mut ParameterGradients) {
    let p = at.params;
    let d = [
        -adj.x * out.x,
        -adj.y * out.y,
        -adj.x * (-p[0]).exp(),
        -adj.y * (-p[1]).exp(),
    ];
    scatter_affine(at, d, g);
}

/// Forward tape for points on the spiral axis, where the gap stage is the
/// identity.
#[derive(Debug, Clone)]
pub struct AxisTape {
    trail: Vec<Vec3>,
    after_flow: Vec3,
    affine: AffineAt,
    pub output: Vec3,
}

pub fn axis_forward_taped(t: &ComposedTransform, z: f64) -> Result<AxisTape> {
    let x = Vec3::new(0.0, 0.0, z);
    let mut trail = Vec::with_capacity(t.flow.steps);
    let after_flow = t.flow.integrate_recorded(&x, Direction::Forward, &mut trail)?;
    let affine = t.affine.at(after_flow.z, t.z_range());
    let output = t.affine.forward(&after_flow, t.z_range());
    Ok(AxisTape {
        trail,
        after_flow,
        affine,
        output,
    })
}

pub fn backprop_axis_forward(t: &ComposedTransform, tape: &AxisTape, adj: Vec3, g: &mut ParameterGradients) {
    let at = &tape.affine;
    let p = at.params;
    let x = tape.after_flow;
    let (ex, ey) = (p[0].exp(), p[1].exp());
    let d = [adj.x * x.x * ex, adj.y * x.y * ey, adj.x, adj.y];
    scatter_affine(at, d, g);
    let dz: f64 = (0..4).map(|i| d[i] * at.dparams_dz[i]).sum();
    let a = Vec3::new(adj.x * ex, adj.y * ey, adj.z + dz);
    backprop_flow(&t.flow, &tape.trail, Direction::Forward, a, g);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SpiralParams, Winding};
    use crate::transform::TransformLayout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(seed: u64) -> ComposedTransform {
        let sp = SpiralParams::new(1.2, 5.0 * TAU, 0.0, 12.0, Winding::Anticlockwise).unwrap();
        let (lo, hi) = ComposedTransform::canonical_box(&sp, 3.0);
        let layout = TransformLayout {
            affine_keypoints: 4,
            fine_fraction: 0.25,
            coarse_factor: 2.0,
            gap_per_winding: 2,
            gap_z_nodes: 3,
            euler_steps: 16,
        };
        let mut t = ComposedTransform::identity(sp, lo, hi, &layout);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = ParamVector::read(&t);
        let mask = ParamVector::length_mask(&t);
        let n = flat.len();
        for (i, v) in flat.iter_mut().enumerate().take(n - 1) {
            *v += if mask[i] { rng.random_range(-1.5..1.5) } else { rng.random_range(-0.2..0.2) };
        }
        ParamVector::write(&mut t, &flat);
        t
    }

    /// Scalar probe: a fixed linear functional of the canonical image.
    fn probe(t: &ComposedTransform, x: &Vec3, w: &Vec3) -> f64 {
        t.inverse(x).unwrap().dot(w)
    }

    #[test]
    fn inverse_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let t = random_transform(seed);
            let x = Vec3::new(4.0 + seed as f64, -3.0, 6.0);
            let w = Vec3::new(0.3, -0.7, 0.2);
            let tape = inverse_taped(&t, &x).unwrap();
            let mut g = ParameterGradients::zeros_like(&t);
            backprop_inverse(&t, &tape, w, &mut g);
            let analytic = g.flatten();
            let base = ParamVector::read(&t);
            let mut worst: f64 = 0.0;
            for i in 0..base.len() {
                let h = 1e-6;
                let mut tp = t.clone();
                let mut v = base.clone();
                v[i] += h;
                ParamVector::write(&mut tp, &v);
                let fp = probe(&tp, &x, &w);
                v[i] -= 2.0 * h;
                ParamVector::write(&mut tp, &v);
                let fm = probe(&tp, &x, &w);
                let fd = (fp - fm) / (2.0 * h);
                let scale = fd.abs().max(analytic[i].abs());
                let err = if scale > 1e-6 { (fd - analytic[i]).abs() / scale } else { (fd - analytic[i]).abs() };
                worst = worst.max(err);
            }
            assert!(worst < 1e-4, "seed {seed}: worst relative error {worst}");
        }
    }

    #[test]
    fn axis_forward_gradient_matches_finite_differences() {
        let t = random_transform(7);
        let w = Vec3::new(1.0, -0.5, 0.25);
        let tape = axis_forward_taped(&t, 5.0).unwrap();
        let mut g = ParameterGradients::zeros_like(&t);
        backprop_axis_forward(&t, &tape, w, &mut g);
        let analytic = g.flatten();
        let base = ParamVector::read(&t);
        for i in 0..base.len() {
            let h = 1e-6;
            let mut tp = t.clone();
            let mut v = base.clone();
            v[i] += h;
            ParamVector::write(&mut tp, &v);
            let fp = tp.forward(&Vec3::new(0.0, 0.0, 5.0)).unwrap().dot(&w);
            v[i] -= 2.0 * h;
            ParamVector::write(&mut tp, &v);
            let fm = tp.forward(&Vec3::new(0.0, 0.0, 5.0)).unwrap().dot(&w);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - analytic[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn param_vector_round_trips() {
        let t = random_transform(3);
        let flat = ParamVector::read(&t);
        let mut t2 = t.clone();
        ParamVector::write(&mut t2, &flat);
        assert_eq!(t, t2);
        assert_eq!(flat.len(), ParameterGradients::zeros_like(&t).len());
    }
}
