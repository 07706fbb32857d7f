//! Surface normals from the gradient of the surface probability.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NormalSample, Path};
use crate::geometry::Vec3;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    /// Side of the averaging cube, in voxels.
    pub window: usize,
    /// Gradients at or below this magnitude (probability per voxel) are ignored.
    pub mag_threshold: f64,
    /// Stratification cell side, in voxels.
    pub cell: usize,
    pub seed: u64,
}

impl Default for NormalParams {
    fn default() -> Self {
        NormalParams {
            window: 5,
            mag_threshold: 0.05,
            cell: 8,
            seed: 0,
        }
    }
}

fn value(v: &Volume, channel: usize, i: i64, j: i64, k: i64) -> f64 {
    // replicate the border so the volume edge does not read as a step
    let d = v.dims;
    let c = |x: i64, n: usize| x.clamp(0, n as i64 - 1) as usize;
    v.channels[channel][v.index(c(i, d[0]), c(j, d[1]), c(k, d[2]))] as f64 / 255.0
}

/// 3×3×3 Sobel response at a voxel, in probability per voxel.
pub fn sobel(v: &Volume, channel: usize, at: [i64; 3]) -> Vec3 {
    const SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];
    const DERIV: [f64; 3] = [-1.0, 0.0, 1.0];
    let mut g = Vec3::zeros();
    for dk in 0..3 {
        for dj in 0..3 {
            for di in 0..3 {
                let val = value(v, channel, at[0] + di as i64 - 1, at[1] + dj as i64 - 1, at[2] + dk as i64 - 1);
                if val == 0.0 {
                    continue;
                }
                g.x += DERIV[di] * SMOOTH[dj] * SMOOTH[dk] * val;
                g.y += SMOOTH[di] * DERIV[dj] * SMOOTH[dk] * val;
                g.z += SMOOTH[di] * SMOOTH[dj] * DERIV[dk] * val;
            }
        }
    }
    // 32 = sum of |weights| for a unit ramp
    g / 32.0
}

fn voxel_of(v: &Volume, p: &Vec3) -> [i64; 3] {
    [
        (p.x / v.spacing[0]).floor() as i64,
        (p.y / v.spacing[1]).floor() as i64,
        (p.z / v.spacing[2]).floor() as i64,
    ]
}

/// Mean gradient direction in a window around `p`. Gradients are flipped
/// to agree with the strongest one first, since the two flanks of a thin
/// sheet point in opposite directions.
pub fn window_normal(v: &Volume, channel: usize, p: &Vec3, params: &NormalParams) -> Option<Vec3> {
    let c = voxel_of(v, p);
    let lo = -((params.window / 2) as i64);
    let hi = lo + params.window as i64;
    let mut grads = Vec::new();
    for dk in lo..hi {
        for dj in lo..hi {
            for di in lo..hi {
                let g = sobel(v, channel, [c[0] + di, c[1] + dj, c[2] + dk]);
                if g.norm() > params.mag_threshold {
                    // physical units for anisotropic grids
                    grads.push(Vec3::new(g.x / v.spacing[0], g.y / v.spacing[1], g.z / v.spacing[2]));
                }
            }
        }
    }
    let reference = *grads.iter().max_by(|a, b| a.norm().total_cmp(&b.norm()))?;
    let sum: Vec3 = grads
        .iter()
        .map(|g| if g.dot(&reference) < 0.0 { -g } else { *g })
        .sum();
    let n = sum.norm();
    (n > 0.0).then(|| sum / n)
}

/// One candidate point per occupied stratification cell, drawn with the seed.
pub fn stratified_points(v: &Volume, paths: &[Path], params: &NormalParams) -> Vec<Vec3> {
    let cell = params.cell.max(1) as i64;
    let mut cells: BTreeMap<[i64; 3], Vec<Vec3>> = BTreeMap::new();
    for p in paths.iter().flat_map(|p| p.points.iter()) {
        let vx = voxel_of(v, p);
        let key = [vx[2].div_euclid(cell), vx[1].div_euclid(cell), vx[0].div_euclid(cell)];
        cells.entry(key).or_default().push(*p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    cells
        .into_values()
        .map(|pts| pts[rng.random_range(0..pts.len())])
        .collect()
}

/// Normal samples at stratified path points.
pub fn estimate_normals(v: &Volume, channel: usize, paths: &[Path], params: &NormalParams) -> Vec<NormalSample> {
    let centers = stratified_points(v, paths, params);
    crate::par::map(&centers, |p| {
        window_normal(v, channel, p, params).map(|normal| NormalSample { position: *p, normal })
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Flips normals to point away from the vertical axis through `center`.
pub fn orient_outward(samples: &mut [NormalSample], center: &Vec3) {
    for s in samples {
        let r = Vec3::new(s.position.x - center.x, s.position.y - center.y, 0.0);
        if r.dot(&s.normal) < 0.0 {
            s.normal = -s.normal;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::PathKind;
    use crate::volume::quantize;

    fn filled(dims: [usize; 3], f: impl Fn(Vec3) -> f64) -> Volume {
        let mut v = Volume::new(dims, [1.0; 3], 1);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = v.index(i, j, k);
                    v.channels[0][idx] = quantize(f(v.center(i, j, k)));
                }
            }
        }
        v
    }

    fn path_of(points: Vec<Vec3>) -> Path {
        Path { id: 0, kind: PathKind::Surface, points }
    }

    #[test]
    fn constant_volume_has_no_samples() {
        let v = filled([12, 12, 12], |_| 0.7);
        let p = path_of(vec![Vec3::new(6.0, 6.0, 6.0), Vec3::new(6.5, 6.0, 6.0)]);
        assert!(estimate_normals(&v, 0, &[p], &NormalParams::default()).is_empty());
    }

    #[test]
    fn slab_normals_are_vertical() {
        let v = filled([24, 24, 24], |p| (-(p.z - 12.0).powi(2) / (2.0 * 1.5f64.powi(2))).exp());
        let pts: Vec<Vec3> = (0..24)
            .flat_map(|i| (0..24).map(move |j| Vec3::new(i as f64 + 0.5, j as f64 + 0.5, 12.0)))
            .collect();
        let s = estimate_normals(&v, 0, &[path_of(pts)], &NormalParams::default());
        assert!(s.len() >= 9);
        for n in &s {
            assert!(n.normal.z.abs() > 5f64.to_radians().cos(), "{:?}", n.normal);
        }
    }

    #[test]
    fn shell_normals_are_radial() {
        let c = Vec3::new(16.0, 16.0, 16.0);
        let v = filled([32, 32, 32], |p| (-((p - c).norm() - 10.0).powi(2) / (2.0 * 1.2f64.powi(2))).exp());
        let mut pts = Vec::new();
        for a in 0..40 {
            for b in 1..20 {
                let (t, f) = (a as f64 / 40.0 * std::f64::consts::TAU, b as f64 / 20.0 * std::f64::consts::PI);
                pts.push(c + 10.0 * Vec3::new(f.sin() * t.cos(), f.sin() * t.sin(), f.cos()));
            }
        }
        let params = NormalParams { cell: 4, ..Default::default() };
        let mut s = estimate_normals(&v, 0, &[path_of(pts)], &params);
        assert!(s.len() > 20);
        orient_outward(&mut s, &c);
        for n in &s {
            let radial = (n.position - c).normalize();
            assert!(n.normal.dot(&radial).abs() > 10f64.to_radians().cos());
            assert!((n.normal.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn stratification_is_seeded() {
        let v = Volume::new([16, 16, 16], [1.0; 3], 1);
        let pts: Vec<Vec3> = (0..100).map(|i| Vec3::new(0.15 * i as f64, 3.0, 3.0)).collect();
        let paths = [path_of(pts)];
        let a = stratified_points(&v, &paths, &NormalParams::default());
        let b = stratified_points(&v, &paths, &NormalParams::default());
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }
}
