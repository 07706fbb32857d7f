//! Synthetic scrolls with a known transform, used as ground truth.

pub mod raster;

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Bounds, FeatureSet, NormalSample, Path, PathKind, WindingLink};
use crate::fit::FittedModel;
use crate::geometry::{spiral_point_unchecked, SpiralParams, Vec3, Winding};
use crate::transform::{ComposedTransform, Direction, TransformLayout};
use crate::trimesh::TriMesh;

/// Observations and rasters leave out the spiral core below this angle.
pub const CORE_THETA: f64 = PI;

/// Largest flow magnitude, in fine cells, the phantom generator accepts.
pub const MAX_DEFORMATION: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub windings: f64,
    pub spacing: f64,
    pub z_extent: f64,
    pub direction: Winding,
    /// Largest flow velocity, in fine-grid cells.
    pub deformation: f64,
    /// Largest per-keypoint affine log-scale.
    pub affine_scale: f64,
    /// Largest gap log-scale.
    pub gap_scale: f64,
    /// Standard deviation of the per-coordinate jitter on path points.
    pub jitter: f64,
    /// Fraction of paths removed.
    pub dropout: f64,
    /// Fraction of links given a wrong offset.
    pub false_link_rate: f64,
    /// Number of constant-z slices carrying surface paths.
    pub slices: usize,
    /// Number of angles carrying vertical surface paths.
    pub vertical_angles: usize,
    pub fibers_horizontal: usize,
    pub fibers_vertical: usize,
    pub normals: usize,
    /// Distance between consecutive path points.
    pub point_step: f64,
    /// Angular length of one surface path, in radians.
    pub path_angle: f64,
    /// Border between the outermost winding and the volume boundary, in
    /// winding spacings.
    pub border: f64,
    /// Amplitude of an extra quadratic bend in x over z (0 keeps the
    /// phantom inside the fitted model family).
    pub bend: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            windings: 8.0,
            spacing: 20.0,
            z_extent: 200.0,
            direction: Winding::Anticlockwise,
            deformation: 1.5,
            affine_scale: 0.05,
            gap_scale: 0.1,
            jitter: 0.5,
            dropout: 0.2,
            false_link_rate: 0.05,
            slices: 24,
            vertical_angles: 12,
            fibers_horizontal: 16,
            fibers_vertical: 16,
            normals: 4000,
            point_step: 2.0,
            path_angle: 1.5 * PI,
            border: 2.0,
            bend: 0.0,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.windings, self.spacing, self.z_extent, self.point_step, self.path_angle];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("phantom sizes must be positive".into()));
        }
        if !(0.0..=MAX_DEFORMATION).contains(&self.deformation) {
            return Err(Error::Config(format!(
                "deformation {} fine cells exceeds the invertibility bound {MAX_DEFORMATION}",
                self.deformation
            )));
        }
        for (name, v) in [("dropout", self.dropout), ("false_link_rate", self.false_link_rate)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.jitter < 0.0 || self.affine_scale < 0.0 || self.gap_scale < 0.0 || self.border < 0.0 {
            return Err(Error::Config("phantom noise and scale parameters must be non-negative".into()));
        }
        Ok(())
    }

    pub fn spiral(&self) -> Result<SpiralParams> {
        SpiralParams::new(self.spacing / TAU, self.windings * TAU, 0.0, self.z_extent, self.direction)
    }

    /// Scan-space volume bounds.
    pub fn bounds(&self) -> Bounds {
        let side = 2.0 * (self.windings + self.border) * self.spacing;
        Bounds {
            min: [0.0; 3],
            max: [side, side, self.z_extent],
        }
    }
}

/// Ground truth and the noisy observations generated from it.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub config: PhantomConfig,
    pub truth: ComposedTransform,
    pub bounds: Bounds,
    pub features: FeatureSet,
    /// Fiber curves before jitter.
    pub clean_fibers: Vec<Path>,
    /// Number of links whose offset was corrupted.
    pub false_links: usize,
}

/// Observed surface path with the canonical coordinates it was drawn from.
struct Drawn {
    kind: PathKind,
    thetas: Vec<f64>,
    zs: Vec<f64>,
}

impl Phantom {
    /// Ground-truth canonical → scan map, including any out-of-family bend.
    pub fn truth_forward(&self, p: &Vec3) -> Result<Vec3> {
        let q = self.truth.forward(p)?;
        Ok(bend(&self.config, q))
    }

    /// Model view of the truth, for metric self-evaluation.
    pub fn true_model(&self) -> FittedModel {
        let b = self.bounds.center();
        FittedModel {
            transform: self.truth.clone(),
            center_ref: [b.x, b.y],
            seed: self.config.seed,
            steps: 0,
            final_loss: 0.0,
            history: Vec::new(),
        }
    }

    /// Triangulated deformed spiral with per-vertex winding labels.
    pub fn gt_mesh(&self, dtheta: f64, dz: f64) -> Result<TriMesh> {
        gt_mesh_with(&self.truth.spiral, dtheta, dz, |p| self.truth_forward(p))
    }
}

fn bend(config: &PhantomConfig, mut q: Vec3) -> Vec3 {
    if config.bend != 0.0 {
        let h = 0.5 * config.z_extent;
        let s = (q.z - h) / h;
        q.x += config.bend * s * s;
    }
    q
}

/// Lattice θ values `dtheta, 2·dtheta, …` up to `theta_max`.
pub(crate) fn theta_lattice(theta_max: f64, dtheta: f64) -> Vec<f64> {
    let n = (theta_max / dtheta + 1e-9).floor() as usize;
    (1..=n).map(|i| i as f64 * dtheta).collect()
}

pub(crate) fn z_lattice(z_min: f64, z_max: f64, dz: f64) -> Vec<f64> {
    let n = ((z_max - z_min) / dz + 1e-9).floor() as usize;
    (0..=n).map(|j| z_min + j as f64 * dz).collect()
}

/// Triangulates a (θ, z) lattice mapped through `map`; the quad diagonal
/// alternates with the parity of `i + j`.
pub(crate) fn gt_mesh_with(
    spiral: &SpiralParams,
    dtheta: f64,
    dz: f64,
    map: impl Fn(&Vec3) -> Result<Vec3> + Sync,
) -> Result<TriMesh> {
    lattice_mesh(spiral, 0.0, dtheta, dz, map)
}

/// Like [`gt_mesh_with`], restricted to `θ ≥ theta_min`.
pub(crate) fn lattice_mesh(
    spiral: &SpiralParams,
    theta_min: f64,
    dtheta: f64,
    dz: f64,
    map: impl Fn(&Vec3) -> Result<Vec3> + Sync,
) -> Result<TriMesh> {
    if !(dtheta > 0.0 && dz > 0.0) {
        return Err(Error::Domain("lattice steps must be positive".into()));
    }
    let mut thetas = theta_lattice(spiral.theta_max, dtheta);
    thetas.retain(|t| *t >= theta_min);
    let zs = z_lattice(spiral.z_min, spiral.z_max, dz);
    let (ni, nj) = (thetas.len(), zs.len());
    let canon: Vec<(f64, f64)> = (0..ni * nj).map(|k| (thetas[k / nj], zs[k % nj])).collect();
    let vertices = crate::par::map(&canon, |&(th, z)| map(&spiral_point_unchecked(th, z, spiral)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let winding = canon.iter().map(|(th, _)| (th / TAU).floor() as i32).collect();
    Ok(TriMesh {
        vertices,
        faces: lattice_faces(ni, nj),
        winding: Some(winding),
    })
}

/// Triangles of an `ni × nj` vertex lattice stored with index `i·nj + j`.
pub(crate) fn lattice_faces(ni: usize, nj: usize) -> Vec<[u32; 3]> {
    let mut faces = Vec::with_capacity(2 * ni.saturating_sub(1) * nj.saturating_sub(1));
    let id = |i: usize, j: usize| (i * nj + j) as u32;
    for i in 0..ni.saturating_sub(1) {
        for j in 0..nj.saturating_sub(1) {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            } else {
                faces.push([a, b, d]);
                faces.push([b, c, d]);
            }
        }
    }
    faces
}

fn random_transform(config: &PhantomConfig, rng: &mut ChaCha8Rng) -> Result<ComposedTransform> {
    let spiral = config.spiral()?;
    let (lo, hi) = ComposedTransform::canonical_box(&spiral, spiral.spacing());
    let layout = TransformLayout::default();
    let mut t = ComposedTransform::identity(spiral, lo, hi, &layout);

    if config.deformation > 0.0 {
        // Mostly coarse, low-frequency motion with a small fine component.
        for v in &mut t.flow.coarse.data {
            *v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        for v in &mut t.flow.fine.data {
            *v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.15;
        }
        let speed = t.flow.max_speed_in_fine_cells();
        let s = config.deformation / speed;
        t.flow.coarse.data.iter_mut().for_each(|v| *v *= s);
        t.flow.fine.data.iter_mut().for_each(|v| *v *= s);
    }
    for g in &mut t.gap.values {
        *g = rng.random_range(-1.0..1.0) * config.gap_scale;
    }

    // Scales are random; translations put the deformed axis at the volume
    // center at every keypoint height.
    let center = config.bounds().center();
    let n = t.affine.keypoints.len();
    for k in 0..n {
        let z = spiral.z_min + (spiral.z_max - spiral.z_min) * k as f64 / (n - 1) as f64;
        let axis = t.flow.integrate(&Vec3::new(0.0, 0.0, z), Direction::Forward)?;
        let kp = &mut t.affine.keypoints[k];
        kp.log_sx = rng.random_range(-1.0..1.0) * config.affine_scale;
        kp.log_sy = rng.random_range(-1.0..1.0) * config.affine_scale;
        kp.tx = center.x - kp.log_sx.exp() * axis.x;
        kp.ty = center.y - kp.log_sy.exp() * axis.y;
    }
    Ok(t)
}

/// Samples θ from `lo` to `hi` with roughly `step` arc length between points.
fn arc_thetas(rho: f64, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut th = lo;
    while th <= hi {
        out.push(th);
        th += step / (rho * th.max(1.0));
    }
    out
}

fn steps_between(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

pub fn make_phantom(config: &PhantomConfig) -> Result<Phantom> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = random_transform(config, &mut rng)?;
    let sp = truth.spiral;
    let bounds = config.bounds();
    let theta_lo = CORE_THETA;
    let z_lo = config.point_step.min(0.25 * config.z_extent);
    let z_hi = config.z_extent - z_lo;

    let mut drawn: Vec<Drawn> = Vec::new();
    // constant-z surface arcs
    for s in 0..config.slices {
        let z = config.z_extent * (s as f64 + 0.5) / config.slices as f64;
        let phase = rng.random_range(0.0..config.path_angle);
        let mut start = theta_lo + phase - config.path_angle;
        while start < sp.theta_max {
            let a = start.max(theta_lo);
            let b = (start + config.path_angle).min(sp.theta_max);
            let thetas = arc_thetas(sp.rho, a, b, config.point_step);
            if thetas.len() >= 3 {
                drawn.push(Drawn {
                    kind: PathKind::Surface,
                    zs: vec![z; thetas.len()],
                    thetas,
                });
            }
            start += config.path_angle;
        }
    }
    // constant-θ surface verticals
    let phase = rng.random_range(0.0..TAU);
    for a in 0..config.vertical_angles {
        let alpha = phase + TAU * a as f64 / config.vertical_angles.max(1) as f64;
        let mut th = alpha;
        while th <= sp.theta_max {
            if th >= theta_lo {
                let zs = steps_between(z_lo, z_hi, config.point_step);
                drawn.push(Drawn {
                    kind: PathKind::Surface,
                    thetas: vec![th; zs.len()],
                    zs,
                });
            }
            th += TAU;
        }
    }
    // fibers
    let theta_draw = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random_range(theta_lo * theta_lo..sp.theta_max * sp.theta_max);
        u.sqrt()
    };
    for _ in 0..config.fibers_horizontal {
        let z = rng.random_range(z_lo..z_hi);
        let a = theta_draw(&mut rng);
        let b = (a + 0.5 * config.path_angle).min(sp.theta_max);
        let thetas = arc_thetas(sp.rho, a, b, config.point_step);
        drawn.push(Drawn {
            kind: PathKind::FiberHorizontal,
            zs: vec![z; thetas.len()],
            thetas,
        });
    }
    for _ in 0..config.fibers_vertical {
        let th = theta_draw(&mut rng);
        let z0 = rng.random_range(z_lo..0.5 * config.z_extent);
        let zs = steps_between(z0, (z0 + 0.5 * config.z_extent).min(z_hi), config.point_step);
        drawn.push(Drawn {
            kind: PathKind::FiberVertical,
            thetas: vec![th; zs.len()],
            zs,
        });
    }

    let keep: Vec<bool> = drawn.iter().map(|_| rng.random::<f64>() >= config.dropout).collect();
    let jitter = Normal::new(0.0, config.jitter.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let noisy = |p: Vec3, rng: &mut ChaCha8Rng| {
        if config.jitter > 0.0 {
            p + Vec3::new(jitter.sample(rng), jitter.sample(rng), jitter.sample(rng))
        } else {
            p
        }
    };
    let map = |th: f64, z: f64| -> Result<Vec3> {
        let q = truth.forward(&spiral_point_unchecked(th, z, &sp))?;
        Ok(bend(config, q))
    };

    let mut features = FeatureSet {
        bounds: Some(bounds),
        ..Default::default()
    };
    let mut clean_fibers = Vec::new();
    let mut ids = vec![None; drawn.len()];
    for (i, d) in drawn.iter().enumerate() {
        let clean: Vec<Vec3> = d.thetas.iter().zip(&d.zs).map(|(&th, &z)| map(th, z)).collect::<Result<_>>()?;
        if d.kind != PathKind::Surface {
            clean_fibers.push(Path {
                id: clean_fibers.len() as u32,
                kind: d.kind,
                points: clean.clone(),
            });
        }
        if !keep[i] {
            continue;
        }
        let id = features.paths.len() as u32;
        ids[i] = Some(id);
        let points = clean.into_iter().map(|p| noisy(p, &mut rng)).collect();
        features.paths.push(Path { id, kind: d.kind, points });
    }

    // Links between kept surface paths one winding apart on the same slice or
    // the same vertical angle.
    let mut false_links = 0;
    let surface: Vec<usize> = (0..drawn.len())
        .filter(|&i| ids[i].is_some() && drawn[i].kind == PathKind::Surface)
        .collect();
    for &i in &surface {
        for &j in &surface {
            let (a, b) = (&drawn[i], &drawn[j]);
            let pairs = link_pairs(a, b);
            if pairs.is_empty() {
                continue;
            }
            let mut point_pairs = Vec::with_capacity(pairs.len());
            for (th, z) in pairs {
                let pa = noisy(map(th, z)?, &mut rng);
                let pb = noisy(map(th + TAU, z)?, &mut rng);
                point_pairs.push((pa, pb));
            }
            let mut offset = 1;
            if rng.random::<f64>() < config.false_link_rate {
                offset = if rng.random::<bool>() { 2 } else { -1 };
                false_links += 1;
            }
            features.links.push(WindingLink {
                from: ids[i].unwrap(),
                to: ids[j].unwrap(),
                offset,
                votes: point_pairs.len() as u32,
                point_pairs,
            });
        }
    }

    // finite-difference normals, oriented away from the axis
    for _ in 0..config.normals {
        let th = theta_draw(&mut rng);
        let z = rng.random_range(z_lo..z_hi);
        let p = map(th, z)?;
        let h = 1e-3 * config.spacing;
        let dth = h / (sp.rho * th);
        let tt = (map(th + dth, z)? - map(th - dth, z)?) / (2.0 * dth);
        let tz = (map(th, z + h)? - map(th, z - h)?) / (2.0 * h);
        let mut n = tt.cross(&tz).normalize();
        let c = spiral_point_unchecked(th, z, &sp);
        let outward = c.xy().normalize();
        let out = map_canonical(&truth, config, &(c + Vec3::new(outward.x, outward.y, 0.0) * h))? - p;
        if n.dot(&out) < 0.0 {
            n = -n;
        }
        features.normals.push(NormalSample { position: p, normal: n });
    }

    Ok(Phantom {
        config: config.clone(),
        truth,
        bounds,
        features,
        clean_fibers,
        false_links,
    })
}

fn map_canonical(t: &ComposedTransform, config: &PhantomConfig, c: &Vec3) -> Result<Vec3> {
    Ok(bend(config, t.forward(c)?))
}

/// Canonical (θ, z) samples of `a` that have a counterpart on `b` one
/// winding further out.
fn link_pairs(a: &Drawn, b: &Drawn) -> Vec<(f64, f64)> {
    const EVERY: usize = 4;
    let tol = 1e-9;
    if a.kind != PathKind::Surface || b.kind != PathKind::Surface {
        return Vec::new();
    }
    let same_z = a.zs[0] == b.zs[0] && a.zs.iter().all(|z| *z == a.zs[0]) && b.zs.iter().all(|z| *z == b.zs[0]);
    let same_theta = a.thetas.iter().all(|t| *t == a.thetas[0]) && b.thetas.iter().all(|t| *t == b.thetas[0]);
    if same_z && !same_theta {
        let (blo, bhi) = (b.thetas[0], *b.thetas.last().unwrap());
        return a
            .thetas
            .iter()
            .step_by(EVERY)
            .filter(|th| **th + TAU >= blo - tol && **th + TAU <= bhi + tol)
            .map(|th| (*th, a.zs[0]))
            .collect();
    }
    if same_theta && (b.thetas[0] - a.thetas[0] - TAU).abs() < tol {
        let (blo, bhi) = (b.zs[0], *b.zs.last().unwrap());
        return a
            .zs
            .iter()
            .step_by(EVERY)
            .filter(|z| **z >= blo && **z <= bhi)
            .map(|z| (a.thetas[0], *z))
            .collect();
    }
    Vec::new()
}
