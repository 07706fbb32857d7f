//! Soft-occupancy rasterization of a phantom into a probability volume.

use serde::{Deserialize, Serialize};

use super::Phantom;
use crate::error::{Error, Result};
use crate::features::pipeline::{FIBER_H_CHANNEL, FIBER_V_CHANNEL, SURFACE_CHANNEL};
use crate::features::PathKind;
use crate::geometry::Vec3;
use crate::trimesh::point_triangle_distance;
use crate::volume::{quantize, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub dims: [usize; 3],
    /// Distance from the surface at which occupancy reaches zero, in voxels.
    pub thickness: f64,
    /// Gaussian blur σ in voxels; 0 disables blurring.
    pub blur: f64,
    /// Fiber tube radius in voxels.
    pub fiber_radius: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            dims: [256, 256, 256],
            thickness: 2.0,
            blur: 0.75,
            fiber_radius: 1.5,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Config("raster dims must be positive".into()));
        }
        if !(self.thickness > 0.0) || !(self.fiber_radius > 0.0) || !(self.blur >= 0.0) {
            return Err(Error::Config("raster thickness, radius and blur must be positive".into()));
        }
        Ok(())
    }
}

/// Occupancy buffer filled by minimum distance to primitives, one z layer
/// per parallel job.
struct DistanceField {
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl DistanceField {
    /// For each voxel, `1 - d / reach` clamped to [0, 1], with `d` the
    /// distance to the nearest primitive. `boxes[i]` bounds primitive `i`.
    fn occupancy<F>(&self, boxes: &[(Vec3, Vec3)], reach: f64, dist: F) -> Vec<f32>
    where
        F: Fn(usize, &Vec3) -> f64 + Sync,
    {
        let [nx, ny, nz] = self.dims;
        let s = self.spacing;
        let mut by_layer = vec![Vec::new(); nz];
        for (i, (lo, hi)) in boxes.iter().enumerate() {
            let k0 = (((lo.z - reach) / s[2]).floor().max(0.0)) as usize;
            let k1 = ((hi.z + reach) / s[2]).ceil();
            if k1 < 0.0 {
                continue;
            }
            for layer in by_layer.iter_mut().take((k1 as usize + 1).min(nz)).skip(k0) {
                layer.push(i);
            }
        }
        let layers = crate::par::map_range(nz, |k| {
            let mut best = vec![f64::INFINITY; nx * ny];
            let z = (k as f64 + 0.5) * s[2];
            for &i in &by_layer[k] {
                let (lo, hi) = &boxes[i];
                if z < lo.z - reach || z > hi.z + reach {
                    continue;
                }
                let range = |a: usize, n: usize| {
                    let i0 = ((lo[a] - reach) / s[a] - 0.5).ceil().max(0.0) as usize;
                    let i1 = ((hi[a] + reach) / s[a] - 0.5).floor();
                    (i0, if i1 < 0.0 { 0 } else { (i1 as usize + 1).min(n) })
                };
                let (x0, x1) = range(0, nx);
                let (y0, y1) = range(1, ny);
                for j in y0..y1 {
                    for ii in x0..x1 {
                        let p = Vec3::new((ii as f64 + 0.5) * s[0], (j as f64 + 0.5) * s[1], z);
                        let d = dist(i, &p);
                        let cell = &mut best[j * nx + ii];
                        if d < *cell {
                            *cell = d;
                        }
                    }
                }
            }
            best.into_iter()
                .map(|d| (1.0 - d / reach).clamp(0.0, 1.0) as f32)
                .collect::<Vec<f32>>()
        });
        layers.into_iter().flatten().collect()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter().map(|v| (v / sum) as f32).collect()
}

/// Separable Gaussian blur with clamped borders, in place.
fn blur(data: &mut [f32], dims: [usize; 3], sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let stride = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        let src = data.to_vec();
        let lines: Vec<usize> = (0..dims.iter().product::<usize>() / n)
            .map(|l| match axis {
                0 => l * dims[0],
                1 => (l / dims[0]) * dims[0] * dims[1] + l % dims[0],
                _ => l,
            })
            .collect();
        let out = crate::par::map(&lines, |&start| {
            let mut line = vec![0f32; n];
            for (t, slot) in line.iter_mut().enumerate() {
                let mut acc = 0f32;
                for (q, w) in kernel.iter().enumerate() {
                    let u = (t as i64 + q as i64 - r).clamp(0, n as i64 - 1) as usize;
                    acc += w * src[start + u * stride[axis]];
                }
                *slot = acc;
            }
            line
        });
        for (start, line) in lines.iter().zip(out) {
            for (t, v) in line.into_iter().enumerate() {
                data[start + t * stride[axis]] = v;
            }
        }
    }
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm()
}

/// Rasterizes the deformed surface (without its core) and both fiber families into a
/// three-channel volume covering the phantom bounds.
pub fn rasterize(ph: &Phantom, cfg: &RasterConfig) -> Result<Volume> {
    cfg.validate()?;
    let b = ph.bounds;
    let spacing = [0, 1, 2].map(|a| (b.max[a] - b.min[a]) / cfg.dims[a] as f64);
    if b.min.iter().any(|v| *v != 0.0) {
        return Err(Error::Domain("phantom bounds must start at the origin".into()));
    }
    let voxel = spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let field = DistanceField { dims: cfg.dims, spacing };
    let mut volume = Volume::new(cfg.dims, spacing, 3);

    // surface: a lattice finer than a voxel
    let sp = ph.truth.spiral;
    let mesh = super::lattice_mesh(&sp, super::CORE_THETA, 0.5 * voxel / sp.outer_radius(), 0.5 * voxel, |p| {
        ph.truth_forward(p)
    })?;
    let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
    let boxes: Vec<(Vec3, Vec3)> = tris
        .iter()
        .map(|t| (t[0].inf(&t[1]).inf(&t[2]), t[0].sup(&t[1]).sup(&t[2])))
        .collect();
    let mut surface = field.occupancy(&boxes, cfg.thickness * voxel, |i, p| point_triangle_distance(p, &tris[i]));
    blur(&mut surface, cfg.dims, cfg.blur);
    volume.channels[SURFACE_CHANNEL] = surface.into_iter().map(|v| quantize(v as f64)).collect();

    for (kind, channel) in [(PathKind::FiberHorizontal, FIBER_H_CHANNEL), (PathKind::FiberVertical, FIBER_V_CHANNEL)] {
        let segs: Vec<(Vec3, Vec3)> = ph
            .clean_fibers
            .iter()
            .filter(|f| f.kind == kind)
            .flat_map(|f| f.points.windows(2).map(|w| (w[0], w[1])))
            .collect();
        let boxes: Vec<(Vec3, Vec3)> = segs.iter().map(|(a, b)| (a.inf(b), a.sup(b))).collect();
        let mut occ = field.occupancy(&boxes, cfg.fiber_radius * voxel, |i, p| segment_distance(p, &segs[i].0, &segs[i].1));
        blur(&mut occ, cfg.dims, cfg.blur);
        volume.channels[channel] = occ.into_iter().map(|v| quantize(v as f64)).collect();
    }
    Ok(volume)
}
