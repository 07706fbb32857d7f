//! Fitting losses.
//!
//! Every term is written as a function of canonical-space points that
//! returns its value together with d(value)/d(point) and the explicit
//! d(value)/d(rho). The gradient engine chains those adjoints back through
//! the transform; the plain evaluators below just map points and keep the
//! value.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{NormalSample, PathKind};
use crate::geometry::{unwrap_near, SpiralParams, Vec3};
use crate::transform::ComposedTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub normal: f64,
    pub radius: f64,
    pub windings: f64,
    pub distance: f64,
    pub fiber_direction: f64,
    pub stretch: f64,
    pub center: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            normal: 200.0,
            radius: 5.0,
            windings: 10.0,
            distance: 4.0,
            fiber_direction: 5.0,
            stretch: 200.0,
            center: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        LossWeights {
            normal: 0.0,
            radius: 0.0,
            windings: 0.0,
            distance: 0.0,
            fiber_direction: 0.0,
            stretch: 0.0,
            center: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [
            self.normal,
            self.radius,
            self.windings,
            self.distance,
            self.fiber_direction,
            self.stretch,
            self.center,
        ];
        if w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")))
        }
    }
}

/// Per-term enable switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermFlags {
    pub normal: bool,
    pub radius: bool,
    pub windings: bool,
    pub distance: bool,
    pub horizontal: bool,
    pub vertical: bool,
    pub stretch: bool,
    pub center: bool,
}

impl TermFlags {
    pub fn all() -> Self {
        TermFlags {
            normal: true,
            radius: true,
            windings: true,
            distance: true,
            horizontal: true,
            vertical: true,
            stretch: true,
            center: true,
        }
    }

    pub fn none() -> Self {
        TermFlags {
            normal: false,
            radius: false,
            windings: false,
            distance: false,
            horizontal: false,
            vertical: false,
            stretch: false,
            center: false,
        }
    }
}

impl Default for TermFlags {
    fn default() -> Self {
        Self::all()
    }
}

/// Points sampled from one path, in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub kind: PathKind,
    pub points: Vec<Vec3>,
}

/// Two scan points `offset` windings apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub a: Vec3,
    pub b: Vec3,
    pub offset: i32,
}

/// Regularization sample: a point and a unit tangent displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchSample {
    pub position: Vec3,
    pub delta: Vec3,
}

impl StretchSample {
    /// Random unit vector perpendicular to `normal`.
    pub fn random(position: Vec3, normal: &Vec3, rng: &mut impl Rng) -> Self {
        let n = normal.normalize();
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let t1 = n.cross(&helper).normalize();
        let t2 = n.cross(&t1);
        let a: f64 = rng.random_range(0.0..TAU);
        StretchSample {
            position,
            delta: t1 * a.cos() + t2 * a.sin(),
        }
    }
}

/// One minibatch of loss inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pub paths: Vec<PathSample>,
    pub pairs: Vec<PairSample>,
    pub normals: Vec<NormalSample>,
    pub stretch: Vec<StretchSample>,
    pub center_z: Vec<f64>,
    /// Reference xy position of the scroll centerline.
    pub center_ref: [f64; 2],
    /// Finite offset along the normal, in scan length units.
    pub normal_eps: f64,
    pub terms: TermFlags,
}

impl LossBatch {
    pub fn empty() -> Self {
        LossBatch {
            paths: Vec::new(),
            pairs: Vec::new(),
            normals: Vec::new(),
            stretch: Vec::new(),
            center_z: Vec::new(),
            center_ref: [0.0, 0.0],
            normal_eps: 1.0,
            terms: TermFlags::all(),
        }
    }
}

/// Unweighted per-term values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub normal: f64,
    pub radius: f64,
    pub windings: f64,
    pub distance: f64,
    pub horizontal: f64,
    pub vertical: f64,
    pub stretch: f64,
    pub center: f64,
}

impl LossBreakdown {
    pub const NAMES: [&'static str; 8] = [
        "normal",
        "radius",
        "windings",
        "distance",
        "horizontal",
        "vertical",
        "stretch",
        "center",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.normal,
            self.radius,
            self.windings,
            self.distance,
            self.horizontal,
            self.vertical,
            self.stretch,
            self.center,
        ]
    }

    pub fn from_values(v: [f64; 8]) -> Self {
        LossBreakdown {
            normal: v[0],
            radius: v[1],
            windings: v[2],
            distance: v[3],
            horizontal: v[4],
            vertical: v[5],
            stretch: v[6],
            center: v[7],
        }
    }

    pub fn weighted_total(&self, w: &LossWeights, on: &TermFlags) -> f64 {
        let mut t = 0.0;
        let terms = [
            (on.normal, w.normal, self.normal),
            (on.radius, w.radius, self.radius),
            (on.windings, w.windings, self.windings),
            (on.distance, w.distance, self.distance),
            (on.horizontal, w.fiber_direction, self.horizontal),
            (on.vertical, w.fiber_direction, self.vertical),
            (on.stretch, w.stretch, self.stretch),
            (on.center, w.center, self.center),
        ];
        for (enabled, weight, value) in terms {
            if enabled {
                t += weight * value;
            }
        }
        t
    }
}

/// Value of a term plus its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGrad {
    pub value: f64,
    /// d(value)/d(point), aligned with the input points.
    pub adj: Vec<Vec3>,
    /// Explicit d(value)/d(rho).
    pub drho: f64,
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Polar decomposition of a canonical point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Polar {
    pub radius: f64,
    pub phi: f64,
    /// Unit radial direction in xy.
    pub u: (f64, f64),
    /// d(phi)/d(x, y)
    pub gphi: (f64, f64),
}

#[inline]
pub(crate) fn polar(p: &Vec3, sp: &SpiralParams) -> Option<Polar> {
    let phi = sp.angle(p)?;
    let radius = p.xy().norm();
    Some(Polar {
        radius,
        phi,
        u: (p.x / radius, p.y / radius),
        gphi: sp.angle_grad(p),
    })
}

/// d(|p_xy| − rho·phi)/dp
#[inline]
fn radius_grad(pl: &Polar, rho: f64) -> Vec3 {
    Vec3::new(pl.u.0 - rho * pl.gphi.0, pl.u.1 - rho * pl.gphi.1, 0.0)
}

/// Mean absolute deviation from the mean, and its derivative per value.
fn mean_abs_dev(values: &[f64]) -> (f64, Vec<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let signs: Vec<f64> = values.iter().map(|v| sgn(v - mean)).collect();
    let mean_sign = signs.iter().sum::<f64>() / n;
    let value = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    (value, signs.iter().map(|s| (s - mean_sign) / n).collect())
}

/// Constant-radius term for one path. Angles are unwrapped along the path so
/// a path crossing the φ = 0 seam keeps a constant continuing radius.
pub fn radius_term(pts: &[Vec3], sp: &SpiralParams) -> TermGrad {
    let mut adj = vec![Vec3::zeros(); pts.len()];
    let pol: Vec<(usize, Polar)> = pts
        .iter()
        .enumerate()
        .filter_map(|(i, p)| polar(p, sp).map(|pl| (i, pl)))
        .collect();
    if pol.len() < 2 {
        return TermGrad { value: 0.0, adj, drho: 0.0 };
    }
    let mut phis: Vec<f64> = pol.iter().map(|(_, pl)| pl.phi).collect();
    crate::geometry::unwrap_sequence(&mut phis);
    let r: Vec<f64> = pol.iter().zip(&phis).map(|((_, pl), ph)| pl.radius - sp.rho * ph).collect();
    let (value, d) = mean_abs_dev(&r);
    let mut drho = 0.0;
    for (((i, pl), ph), di) in pol.iter().zip(&phis).zip(&d) {
        adj[*i] = radius_grad(pl, sp.rho) * *di;
        drho -= di * ph;
    }
    TermGrad { value, adj, drho }
}

/// Distance from each point's continuing radius to the nearest winding.
pub fn distance_term(pts: &[Vec3], sp: &SpiralParams) -> TermGrad {
    let mut adj = vec![Vec3::zeros(); pts.len()];
    let mut value = 0.0;
    let mut drho = 0.0;
    let mut count = 0usize;
    let spacing = sp.spacing();
    let mut per_point = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let Some(pl) = polar(p, sp) else { continue };
        let r = pl.radius - sp.rho * pl.phi;
        let k = (r / spacing).floor();
        let m = r - k * spacing;
        // tie at half spacing takes the first branch
        let (dist, dr, dspacing) = if m <= 0.5 * spacing {
            (m, 1.0, -k)
        } else {
            (spacing - m, -1.0, k + 1.0)
        };
        let s = sgn(dist);
        value += dist.abs();
        per_point.push((i, pl, s * dr, s * (dr * -pl.phi + dspacing * TAU)));
        count += 1;
    }
    if count == 0 {
        return TermGrad { value: 0.0, adj, drho: 0.0 };
    }
    let n = count as f64;
    for (i, pl, dr, dho) in per_point {
        adj[i] = radius_grad(&pl, sp.rho) * (dr / n);
        drho += dho / n;
    }
    TermGrad {
        value: value / n,
        adj,
        drho,
    }
}

/// Horizontal fibers keep a constant canonical z.
pub fn horizontal_term(pts: &[Vec3]) -> TermGrad {
    let mut adj = vec![Vec3::zeros(); pts.len()];
    if pts.len() < 2 {
        return TermGrad { value: 0.0, adj, drho: 0.0 };
    }
    let z: Vec<f64> = pts.iter().map(|p| p.z).collect();
    let (value, d) = mean_abs_dev(&z);
    for (a, di) in adj.iter_mut().zip(d) {
        a.z = di;
    }
    TermGrad { value, adj, drho: 0.0 }
}

/// Vertical fibers keep a constant (unwrapped) canonical angle.
pub fn vertical_term(pts: &[Vec3], sp: &SpiralParams) -> TermGrad {
    let mut adj = vec![Vec3::zeros(); pts.len()];
    let pol: Vec<(usize, Polar)> = pts
        .iter()
        .enumerate()
        .filter_map(|(i, p)| polar(p, sp).map(|pl| (i, pl)))
        .collect();
    if pol.len() < 2 {
        return TermGrad { value: 0.0, adj, drho: 0.0 };
    }
    let mut phis: Vec<f64> = pol.iter().map(|(_, pl)| pl.phi).collect();
    crate::geometry::unwrap_sequence(&mut phis);
    let (value, d) = mean_abs_dev(&phis);
    for ((i, pl), di) in pol.iter().zip(d) {
        adj[*i] = Vec3::new(pl.gphi.0 * di, pl.gphi.1 * di, 0.0);
    }
    TermGrad { value, adj, drho: 0.0 }
}

/// |(r(b) − r(a)) − K·spacing| for one pair; `b`'s angle is unwrapped next
/// to `a`'s. Returns (value, d/da, d/db, d/drho).
pub fn winding_pair_term(a: &Vec3, b: &Vec3, offset: i32, sp: &SpiralParams) -> Option<(f64, Vec3, Vec3, f64)> {
    let pa = polar(a, sp)?;
    let pb = polar(b, sp)?;
    let phib = unwrap_near(pb.phi, pa.phi);
    let ra = pa.radius - sp.rho * pa.phi;
    let rb = pb.radius - sp.rho * phib;
    let k = offset as f64;
    let d = rb - ra - k * TAU * sp.rho;
    let s = sgn(d);
    Some((
        d.abs(),
        -radius_grad(&pa, sp.rho) * s,
        radius_grad(&pb, sp.rho) * s,
        s * (-phib + pa.phi - k * TAU),
    ))
}

/// 1 − cos(radial direction at p0, p1 − p0). Returns (value, d/dp0, d/dp1),
/// or `None` when the difference vanishes or p0 is on the axis.
pub fn normal_pair_term(p0: &Vec3, p1: &Vec3) -> Option<(f64, Vec3, Vec3)> {
    let d = p1 - p0;
    let dn = d.norm();
    let radius = p0.xy().norm();
    if dn == 0.0 || radius == 0.0 || !dn.is_finite() {
        return None;
    }
    let dr = Vec3::new(p0.x / radius, p0.y / radius, 0.0);
    let dh = d / dn;
    let c = dr.dot(&dh);
    // dc/dd
    let dc_dd = (dr - dh * c) / dn;
    // dc/d(dr) = dh, and d(dr)/dp0 = (I − dr drᵀ)/radius in xy
    let proj = dh.xy() - dr.xy() * dh.xy().dot(&dr.xy());
    let dc_dp0_dir = Vec3::new(proj.x / radius, proj.y / radius, 0.0);
    let dl_dp1 = -dc_dd;
    let dl_dp0 = dc_dd - dc_dp0_dir;
    Some((1.0 - c, dl_dp0, dl_dp1))
}

/// | ‖p1 − p0‖ − 1 |. Returns (value, d/dp0, d/dp1).
pub fn stretch_pair_term(p0: &Vec3, p1: &Vec3) -> (f64, Vec3, Vec3) {
    let d = p1 - p0;
    let n = d.norm();
    if n == 0.0 {
        return (1.0, Vec3::zeros(), Vec3::zeros());
    }
    let s = sgn(n - 1.0);
    let g = d / n * s;
    ((n - 1.0).abs(), -g, g)
}

fn map_all(t: &ComposedTransform, pts: &[Vec3]) -> Result<Vec<Vec3>> {
    crate::par::map(pts, |p| t.inverse(p)).into_iter().collect()
}

pub fn loss_normal(samples: &[NormalSample], t: &ComposedTransform, eps: f64) -> Result<f64> {
    let mut pts = Vec::with_capacity(2 * samples.len());
    for s in samples {
        pts.push(s.position);
        pts.push(s.position + s.normal * eps);
    }
    let m = map_all(t, &pts)?;
    let vals: Vec<f64> = m
        .chunks(2)
        .filter_map(|c| normal_pair_term(&c[0], &c[1]).map(|v| v.0))
        .collect();
    Ok(if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 })
}

pub fn loss_radius(points: &[Vec3], t: &ComposedTransform) -> Result<f64> {
    Ok(radius_term(&map_all(t, points)?, &t.spiral).value)
}

pub fn loss_windings(pairs: &[PairSample], t: &ComposedTransform) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in pairs {
        let a = t.inverse(&p.a)?;
        let b = t.inverse(&p.b)?;
        if let Some((v, ..)) = winding_pair_term(&a, &b, p.offset, &t.spiral) {
            sum += v;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

pub fn loss_distance(points: &[Vec3], t: &ComposedTransform) -> Result<f64> {
    Ok(distance_term(&map_all(t, points)?, &t.spiral).value)
}

pub fn loss_fiber_direction(kind: PathKind, points: &[Vec3], t: &ComposedTransform) -> Result<f64> {
    let m = map_all(t, points)?;
    match kind {
        PathKind::FiberHorizontal => Ok(horizontal_term(&m).value),
        PathKind::FiberVertical => Ok(vertical_term(&m, &t.spiral).value),
        PathKind::Surface => Err(Error::Domain("fiber direction loss needs a fiber path".into())),
    }
}

pub fn loss_stretch(samples: &[StretchSample], t: &ComposedTransform) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for s in samples {
        let a = t.inverse(&s.position)?;
        let b = t.inverse(&(s.position + s.delta))?;
        sum += stretch_pair_term(&a, &b).0;
    }
    Ok(sum / samples.len() as f64)
}

pub fn loss_center(t: &ComposedTransform, z_samples: &[f64], reference: [f64; 2]) -> Result<f64> {
    if z_samples.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for &z in z_samples {
        let c = t.forward(&Vec3::new(0.0, 0.0, z))?;
        sum += (c.x - reference[0]).powi(2) + (c.y - reference[1]).powi(2);
    }
    Ok(sum / z_samples.len() as f64)
}

/// Per-term values of a batch (no gradients).
pub fn loss_breakdown(batch: &LossBatch, t: &ComposedTransform) -> Result<LossBreakdown> {
    crate::objective::evaluate_terms(batch, t)
}

/// Weighted total; the distance term only counts from `distance_start_step`.
pub fn total_loss(
    batch: &LossBatch,
    t: &ComposedTransform,
    weights: &LossWeights,
    step: usize,
    distance_start_step: usize,
) -> Result<f64> {
    let mut on = batch.terms;
    on.distance &= step >= distance_start_step;
    let mut b = batch.clone();
    b.terms = on;
    Ok(loss_breakdown(&b, t)?.weighted_total(weights, &on))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{spiral_point, Winding};
    use crate::transform::TransformLayout;
    use approx::assert_relative_eq;

    fn spiral() -> SpiralParams {
        SpiralParams::new(1.0, 6.0 * TAU, -20.0, 20.0, Winding::Anticlockwise).unwrap()
    }

    fn identity() -> ComposedTransform {
        let sp = spiral();
        let (lo, hi) = ComposedTransform::canonical_box(&sp, 5.0);
        ComposedTransform::identity(sp, lo, hi, &TransformLayout::default())
    }

    #[test]
    fn normal_examples() {
        let t = identity();
        let p = Vec3::new(5.0, 0.0, 0.0);
        let ns = |n: Vec3| [NormalSample { position: p, normal: n }];
        assert_relative_eq!(loss_normal(&ns(Vec3::x()), &t, 1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(loss_normal(&ns(Vec3::y()), &t, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(loss_normal(&ns(-Vec3::x()), &t, 1.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn radius_examples() {
        let sp = spiral();
        let on_winding: Vec<Vec3> = (0..10).map(|i| spiral_point(2.0 * TAU + 0.3 + 0.2 * i as f64, 0.0, &sp).unwrap()).collect();
        assert!(radius_term(&on_winding, &sp).value < 1e-12);
        // r = 0 and r = 2 at φ = 0
        let pts = [Vec3::new(1e-9, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert_relative_eq!(radius_term(&pts, &sp).value, 1.0, epsilon = 1e-6);
        assert_eq!(radius_term(&[Vec3::new(3.0, 1.0, 0.0)], &sp).value, 0.0);
    }

    #[test]
    fn radius_is_seam_invariant() {
        let sp = spiral();
        // a constant-z slice of one sheet crossing φ = 0
        let pts: Vec<Vec3> = (0..40).map(|i| spiral_point(2.0 * TAU - 1.0 + 0.05 * i as f64, 1.0, &sp).unwrap()).collect();
        assert!(radius_term(&pts, &sp).value < 1e-9);
    }

    #[test]
    fn winding_examples() {
        let t = identity();
        let sp = t.spiral;
        let a = Vec3::new(3.0, 0.0, 0.0);
        let at = |r: f64| Vec3::new(r, 0.0, 0.0);
        let pair = |b: Vec3, k: i32| [PairSample { a, b, offset: k }];
        assert_relative_eq!(loss_windings(&pair(at(3.0 + sp.spacing()), 1), &t).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(loss_windings(&pair(at(3.0 + sp.spacing() + 0.7), 1), &t).unwrap(), 0.7, epsilon = 1e-12);
        assert_relative_eq!(loss_windings(&pair(at(3.0 + 2.0 * sp.spacing()), 2), &t).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_examples() {
        let t = identity();
        let sp = t.spiral;
        let on: Vec<Vec3> = (1..6).map(|k| spiral_point(k as f64 * TAU + 0.4, 0.0, &sp).unwrap()).collect();
        assert!(loss_distance(&on, &t).unwrap() < 1e-9);
        assert_relative_eq!(loss_distance(&[Vec3::new(3.2, 0.0, 0.0)], &t).unwrap(), TAU - 3.2, epsilon = 1e-12);
        let half = Vec3::new(0.5 * sp.spacing(), 0.0, 0.0);
        assert_relative_eq!(loss_distance(&[half], &t).unwrap(), std::f64::consts::PI * sp.rho, epsilon = 1e-12);
    }

    #[test]
    fn fiber_examples() {
        let t = identity();
        let flat: Vec<Vec3> = (0..5).map(|i| Vec3::new(3.0 + i as f64, 1.0, 2.5)).collect();
        assert_eq!(loss_fiber_direction(PathKind::FiberHorizontal, &flat, &t).unwrap(), 0.0);
        let two = [Vec3::new(3.0, 1.0, 0.0), Vec3::new(4.0, 1.0, 2.0)];
        assert_relative_eq!(loss_fiber_direction(PathKind::FiberHorizontal, &two, &t).unwrap(), 1.0);
        // vertical fiber sitting on the seam at constant true angle
        let sp = t.spiral;
        let eps = 1e-7;
        let vert: Vec<Vec3> = (0..8)
            .map(|i| {
                let theta = 2.0 * TAU + if i % 2 == 0 { eps } else { -eps };
                spiral_point(theta, -10.0 + i as f64, &sp).unwrap()
            })
            .collect();
        assert!(loss_fiber_direction(PathKind::FiberVertical, &vert, &t).unwrap() < 1e-6);
        assert!(loss_fiber_direction(PathKind::Surface, &vert, &t).is_err());
    }

    #[test]
    fn stretch_examples() {
        let t = identity();
        let s = [StretchSample { position: Vec3::new(4.0, 1.0, 0.0), delta: Vec3::y() }];
        assert_eq!(loss_stretch(&s, &t).unwrap(), 0.0);
        // inverse map is a uniform scale by 2 in xy
        let mut t2 = t.clone();
        for k in &mut t2.affine.keypoints {
            k.log_sx = -(2f64.ln());
            k.log_sy = -(2f64.ln());
        }
        assert_relative_eq!(loss_stretch(&s, &t2).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn center_examples() {
        let t = identity();
        let zs = [-5.0, 0.0, 5.0];
        assert_eq!(loss_center(&t, &zs, [0.0, 0.0]).unwrap(), 0.0);
        let mut t2 = t.clone();
        for k in &mut t2.affine.keypoints {
            k.tx = 3.0;
        }
        assert_relative_eq!(loss_center(&t2, &zs, [0.0, 0.0]).unwrap(), 9.0, epsilon = 1e-12);
        let mut flow = t.clone();
        flow.flow.coarse.data.iter_mut().for_each(|v| *v = Vec3::new(0.0, 0.0, 2.0));
        assert!(loss_center(&flow, &zs, [0.0, 0.0]).unwrap() < 1e-20);
    }
}
