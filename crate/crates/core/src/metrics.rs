//! Evaluation metrics between a fitted model or mesh and a ground-truth
//! surface.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unwrap_near, Vec3};
use crate::mesh::QuadMesh;
use crate::phantom::gt_mesh_with;
use crate::transform::ComposedTransform;
use crate::trimesh::{TriMesh, TriangleHash};

/// Segment of a mesh cross-section with the winding label of its triangle,
/// if all three vertices agree.
#[derive(Debug, Clone, Copy)]
struct Segment {
    a: Vec3,
    b: Vec3,
    label: Option<i32>,
}

/// Intersects every triangle with the plane `z = z0`. Vertices on the plane
/// count as above it, so shared edges are not reported twice.
fn slice_segments(mesh: &TriMesh, z0: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        let t = mesh.triangle(f);
        let above: [bool; 3] = [t[0].z >= z0, t[1].z >= z0, t[2].z >= z0];
        let n_above = above.iter().filter(|a| **a).count();
        if n_above == 0 || n_above == 3 {
            continue;
        }
        let mut pts = Vec::with_capacity(2);
        for e in 0..3 {
            let (p, q) = (t[e], t[(e + 1) % 3]);
            if above[e] != above[(e + 1) % 3] {
                let s = (z0 - p.z) / (q.z - p.z);
                pts.push(p + (q - p) * s);
            }
        }
        let label = mesh.winding.as_ref().and_then(|w| {
            let l = w[face[0] as usize];
            (w[face[1] as usize] == l && w[face[2] as usize] == l).then_some(l)
        });
        out.push(Segment { a: pts[0], b: pts[1], label });
    }
    out
}

/// `slices` evenly spaced heights strictly inside `[z0, z1]`.
fn slice_heights(z0: f64, z1: f64, slices: usize) -> Vec<f64> {
    (0..slices).map(|s| z0 + (z1 - z0) * (s as f64 + 0.5) / slices as f64).collect()
}

/// Winding index of the canonical image of `b`, with its angle taken on the
/// branch nearest `ref_phi`.
fn winding_index(t: &ComposedTransform, c: &Vec3, ref_phi: f64) -> Option<(i64, f64)> {
    let sp = &t.spiral;
    let phi = unwrap_near(sp.angle(c)?, ref_phi);
    let r = c.xy().norm() - sp.rho * phi;
    Some(((r / sp.spacing()).round() as i64, phi))
}

/// Fraction of cross-section segments of `gt` whose endpoints map to
/// different model windings.
pub fn metric_wjf(gt: &TriMesh, model: &ComposedTransform, slices: usize) -> Result<f64> {
    let (z0, z1) = model.z_range();
    let segs: Vec<Segment> = slice_heights(z0, z1, slices)
        .into_iter()
        .flat_map(|z| slice_segments(gt, z))
        .collect();
    jump_fraction(&segs, model)
}

fn jump_fraction(segs: &[Segment], model: &ComposedTransform) -> Result<f64> {
    let jumps = crate::par::map(segs, |s| -> Result<Option<bool>> {
        let ca = model.inverse(&s.a)?;
        let cb = model.inverse(&s.b)?;
        let Some((ka, phi)) = winding_index(model, &ca, 0.0) else { return Ok(None) };
        let Some((kb, _)) = winding_index(model, &cb, phi) else { return Ok(None) };
        Ok(Some(ka != kb))
    });
    let mut total = 0usize;
    let mut jumped = 0usize;
    for j in jumps {
        if let Some(b) = j? {
            total += 1;
            jumped += b as usize;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric("ground truth does not intersect the model's z-range".into()));
    }
    Ok(jumped as f64 / total as f64)
}

/// Nearest ray hit per winding label, for a 2D ray from `c` along `dir`.
fn ray_hits(segs: &[Segment], c: &Vec3, dir: (f64, f64), hits: &mut BTreeMap<i32, f64>) {
    hits.clear();
    for s in segs {
        let Some(label) = s.label else { continue };
        let (ex, ey) = (s.b.x - s.a.x, s.b.y - s.a.y);
        let (wx, wy) = (s.a.x - c.x, s.a.y - c.y);
        let den = dir.0 * ey - dir.1 * ex;
        if den == 0.0 {
            continue;
        }
        let t = (wx * ey - wy * ex) / den;
        let u = (wx * dir.1 - wy * dir.0) / den;
        if t > 0.0 && (0.0..1.0).contains(&u) {
            hits.entry(label).and_modify(|d| *d = d.min(t)).or_insert(t);
        }
    }
}

/// Lattice used to represent model windings in [`metric_mrwd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrwdOptions {
    pub slices: usize,
    pub angles: usize,
    pub dtheta: f64,
    pub dz: f64,
}

/// Mean radial distance, measured from the model's centerline, between
/// equally labelled windings of the model and of `gt`.
pub fn metric_mrwd(gt: &TriMesh, model: &ComposedTransform, opts: &MrwdOptions) -> Result<f64> {
    let labelled;
    let gt = match gt.winding {
        Some(_) => gt,
        None => {
            labelled = label_by_model(gt, model)?;
            &labelled
        }
    };
    let model_mesh = gt_mesh_with(&model.spiral, opts.dtheta, opts.dz, |p| model.forward(p))?;
    let (z0, z1) = model.z_range();
    let heights = slice_heights(z0, z1, opts.slices);
    let per_slice = crate::par::map(&heights, |&z| -> Result<(f64, usize)> {
        let c = model.forward(&Vec3::new(0.0, 0.0, z))?;
        let gs = slice_segments(gt, z);
        let ms = slice_segments(&model_mesh, z);
        let (mut hg, mut hm) = (BTreeMap::new(), BTreeMap::new());
        let mut sum = 0.0;
        let mut n = 0usize;
        for a in 0..opts.angles {
            let ang = TAU * a as f64 / opts.angles as f64;
            let dir = (ang.cos(), ang.sin());
            ray_hits(&gs, &c, dir, &mut hg);
            ray_hits(&ms, &c, dir, &mut hm);
            for (k, dg) in &hg {
                if let Some(dm) = hm.get(k) {
                    sum += (dg - dm).abs();
                    n += 1;
                }
            }
        }
        Ok((sum, n))
    });
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in per_slice {
        let (s, k) = r?;
        sum += s;
        n += k;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("no winding present in both surfaces".into()));
    }
    Ok(sum / n as f64)
}

/// Labels vertices with the model winding nearest to their canonical image.
fn label_by_model(gt: &TriMesh, model: &ComposedTransform) -> Result<TriMesh> {
    let labels = crate::par::map(&gt.vertices, |v| -> Result<i32> {
        let c = model.inverse(v)?;
        Ok(winding_index(model, &c, model.spiral.angle(&c).unwrap_or(0.0)).map_or(-1, |(k, _)| k as i32))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(TriMesh {
        winding: Some(labels),
        ..gt.clone()
    })
}

/// Area-uniform random points on a mesh.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Vec<Vec3> {
    sample_with_source(mesh, count, seed).into_iter().map(|(p, _)| p).collect()
}

/// Area-uniform samples together with the triangle each was drawn from.
fn sample_with_source(mesh: &TriMesh, count: usize, seed: u64) -> Vec<(Vec3, usize)> {
    let mut cum = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.area(f);
        cum.push(acc);
    }
    if acc <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = rng.random_range(0.0..acc);
            let f = cum.partition_point(|c| *c <= x).min(cum.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            (a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2), f)
        })
        .collect()
}

/// Mean distance from area-uniform samples of `gt` to `pred`.
pub fn metric_chamfer(gt: &TriMesh, pred: &TriMesh, sample_count: usize, seed: u64) -> Result<f64> {
    if gt.faces.is_empty() || pred.faces.is_empty() {
        return Err(Error::UndefinedMetric("chamfer distance needs two non-empty meshes".into()));
    }
    let samples = sample_with_source(gt, sample_count, seed);
    if samples.is_empty() {
        return Err(Error::UndefinedMetric("ground truth has zero area".into()));
    }
    let mean_edge = pred
        .faces
        .iter()
        .map(|f| (pred.vertices[f[0] as usize] - pred.vertices[f[1] as usize]).norm())
        .sum::<f64>()
        / pred.faces.len() as f64;
    let hash = TriangleHash::new(pred, (2.0 * mean_edge).max(1e-9));
    // A sample lies exactly on its source triangle; when the prediction
    // contains that same triangle the distance is zero without rounding.
    let mut shared: HashMap<[[u64; 3]; 3], ()> = HashMap::new();
    for f in 0..pred.faces.len() {
        shared.insert(triangle_key(&pred.triangle(f)), ());
    }
    let d = crate::par::map(&samples, |(p, f)| {
        if shared.contains_key(&triangle_key(&gt.triangle(*f))) {
            0.0
        } else {
            hash.distance(pred, p).unwrap_or(f64::INFINITY)
        }
    });
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Order-independent bit pattern of a triangle's corners.
fn triangle_key(t: &[Vec3; 3]) -> [[u64; 3]; 3] {
    let mut k = t.map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]);
    k.sort_unstable();
    k
}

/// Signed angular defect `2π − Σ angles` per vertex; `None` on the boundary.
pub fn angular_defects(mesh: &TriMesh) -> Vec<Option<f64>> {
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for f in &mesh.faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut boundary = vec![false; mesh.vertices.len()];
    let mut used = vec![false; mesh.vertices.len()];
    for (&(a, b), &n) in &edges {
        used[a as usize] = true;
        used[b as usize] = true;
        if n != 2 {
            boundary[a as usize] = true;
            boundary[b as usize] = true;
        }
    }
    let mut sum = vec![0.0; mesh.vertices.len()];
    for f in &mesh.faces {
        for e in 0..3 {
            let v = f[e] as usize;
            let p = mesh.vertices[v];
            let a = mesh.vertices[f[(e + 1) % 3] as usize] - p;
            let b = mesh.vertices[f[(e + 2) % 3] as usize] - p;
            sum[v] += a.angle(&b);
        }
    }
    (0..mesh.vertices.len())
        .map(|v| (used[v] && !boundary[v]).then(|| TAU - sum[v]))
        .collect()
}

/// Mean absolute angular defect over interior vertices.
pub fn metric_angular_defect(mesh: &TriMesh) -> Result<f64> {
    let d: Vec<f64> = angular_defects(mesh).into_iter().flatten().collect();
    if d.is_empty() {
        return Err(Error::UndefinedMetric("mesh has no interior vertices".into()));
    }
    Ok(d.iter().map(|x| x.abs()).sum::<f64>() / d.len() as f64)
}

/// Mean over lattice edges of `max(L3D / Luv, Luv / L3D)`. Also returns the
/// number of edges skipped for zero UV length.
pub fn metric_stretch(mesh: &QuadMesh) -> Result<(f64, usize)> {
    if mesh.uv.len() != mesh.positions.len() {
        return Err(Error::UndefinedMetric("mesh has no UV coordinates".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut skipped = 0usize;
    let mut edge = |a: usize, b: usize| {
        let l3 = (mesh.positions[a] - mesh.positions[b]).norm();
        let (ua, ub) = (mesh.uv[a], mesh.uv[b]);
        let luv = ((ua[0] - ub[0]).powi(2) + (ua[1] - ub[1]).powi(2)).sqrt();
        if luv == 0.0 || l3 == 0.0 {
            skipped += 1;
            return;
        }
        sum += (l3 / luv).max(luv / l3);
        n += 1;
    };
    for i in 0..mesh.ni {
        for j in 0..mesh.nj {
            if i + 1 < mesh.ni {
                edge(mesh.id(i, j), mesh.id(i + 1, j));
            }
            if j + 1 < mesh.nj {
                edge(mesh.id(i, j), mesh.id(i, j + 1));
            }
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("mesh has no measurable edges".into()));
    }
    Ok((sum / n as f64, skipped))
}

/// All metrics for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wjf: f64,
    pub mrwd: f64,
    pub chamfer: f64,
    pub angular_defect: f64,
    pub stretch: f64,
}

/// Options controlling [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsOptions {
    pub slices: usize,
    pub angles: usize,
    pub chamfer_samples: usize,
    pub seed: u64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            slices: 100,
            angles: 100,
            chamfer_samples: 20_000,
            seed: 0,
        }
    }
}

/// Evaluates a fitted transform and its extracted mesh against `gt`.
pub fn evaluate(gt: &TriMesh, model: &ComposedTransform, mesh: &QuadMesh, opts: &MetricsOptions) -> Result<MetricsReport> {
    let (dtheta, dz) = mesh_steps(mesh);
    let tri = mesh.to_trimesh();
    Ok(MetricsReport {
        wjf: metric_wjf(gt, model, opts.slices)?,
        mrwd: metric_mrwd(
            gt,
            model,
            &MrwdOptions {
                slices: opts.slices,
                angles: opts.angles,
                dtheta,
                dz,
            },
        )?,
        chamfer: metric_chamfer(gt, &tri, opts.chamfer_samples, opts.seed)?,
        angular_defect: metric_angular_defect(&tri)?,
        stretch: metric_stretch(mesh)?.0,
    })
}

fn mesh_steps(mesh: &QuadMesh) -> (f64, f64) {
    let dtheta = mesh.thetas.first().copied().unwrap_or(0.01);
    let dz = if mesh.zs.len() > 1 { mesh.zs[1] - mesh.zs[0] } else { 1.0 };
    (dtheta, dz)
}

/// Test surfaces for the metric unit checks.
pub mod fixtures {
    use super::*;

    /// Regular `n × n` grid in the plane z = `z`, cell size `h`.
    pub fn plane(n: usize, h: f64, z: f64) -> TriMesh {
        let mut m = TriMesh::default();
        for i in 0..n {
            for j in 0..n {
                m.vertices.push(Vec3::new(i as f64 * h, j as f64 * h, z));
            }
        }
        m.faces = crate::phantom::lattice_faces(n, n);
        m
    }

    /// Open cylinder of radius `r` and height `height`.
    pub fn cylinder(r: f64, height: f64, around: usize, up: usize) -> TriMesh {
        let mut m = TriMesh::default();
        for i in 0..=around {
            let a = TAU * i as f64 / around as f64;
            for j in 0..=up {
                m.vertices.push(Vec3::new(r * a.cos(), r * a.sin(), height * j as f64 / up as f64));
            }
        }
        // duplicate seam column, then weld it
        let nj = up + 1;
        let mut faces = crate::phantom::lattice_faces(around + 1, nj);
        for f in &mut faces {
            for v in f.iter_mut() {
                if *v as usize >= around * nj {
                    *v -= (around * nj) as u32;
                }
            }
        }
        m.vertices.truncate(around * nj);
        m.faces = faces;
        m
    }

    /// Unit icosphere after `levels` rounds of 4-to-1 subdivision.
    pub fn icosphere(levels: usize) -> TriMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut f: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..levels {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(f.len() * 4);
            let mut midpoint = |a: u32, b: u32, v: &mut Vec<Vec3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(((v[a as usize] + v[b as usize]) * 0.5).normalize());
                    (v.len() - 1) as u32
                })
            };
            for [a, b, c] in f {
                let ab = midpoint(a, b, &mut v);
                let bc = midpoint(b, c, &mut v);
                let ca = midpoint(c, a, &mut v);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            f = next;
        }
        TriMesh {
            vertices: v,
            faces: f,
            winding: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::geometry::{SpiralParams, Winding};
    use crate::mesh::extract_mesh;
    use crate::transform::TransformLayout;

    #[test]
    fn defect_of_developable_surfaces_is_zero() {
        assert!(metric_angular_defect(&plane(12, 0.7, 1.0)).unwrap() <= 1e-6);
        assert!(metric_angular_defect(&cylinder(3.0, 5.0, 40, 10)).unwrap() <= 1e-6);
    }

    #[test]
    fn icosphere_total_defect_is_four_pi() {
        let s = icosphere(3);
        let total: f64 = angular_defects(&s).into_iter().flatten().sum();
        assert!((total - 2.0 * TAU).abs() <= 0.01 * 2.0 * TAU);
        assert!(metric_angular_defect(&s).unwrap() > 0.0);
    }

    #[test]
    fn chamfer_cases() {
        let p = plane(20, 1.0, 0.0);
        assert_eq!(metric_chamfer(&p, &p, 500, 1).unwrap(), 0.0);
        // interior samples of a small plane against a large lifted one
        let mut small = plane(5, 1.0, 0.0);
        small.vertices.iter_mut().for_each(|v| *v += Vec3::new(8.0, 8.0, 0.0));
        let lifted = plane(30, 1.0, 0.75);
        assert!((metric_chamfer(&small, &lifted, 500, 2).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn chamfer_is_asymmetric() {
        let big = plane(20, 1.0, 0.0);
        let mut part = plane(6, 1.0, 0.0);
        part.vertices.iter_mut().for_each(|v| *v += Vec3::new(2.0, 2.0, 0.0));
        assert_eq!(metric_chamfer(&part, &big, 300, 3).unwrap(), 0.0);
        assert!(metric_chamfer(&big, &part, 300, 3).unwrap() > 1.0);
    }

    fn spiral_transform() -> ComposedTransform {
        let sp = SpiralParams::new(3.0, 4.0 * TAU, 0.0, 40.0, Winding::Anticlockwise).unwrap();
        let (lo, hi) = ComposedTransform::canonical_box(&sp, 10.0);
        ComposedTransform::identity(sp, lo, hi, &TransformLayout::default())
    }

    #[test]
    fn stretch_of_undeformed_spiral_is_one() {
        let t = spiral_transform();
        let m = extract_mesh(&t, 0.05, 2.0).unwrap();
        let (s, skipped) = metric_stretch(&m).unwrap();
        assert!((1.0..=1.01).contains(&s), "stretch {s}");
        assert_eq!(skipped, 0);
        let mut doubled = m.clone();
        doubled.positions.iter_mut().for_each(|p| *p *= 2.0);
        assert!((metric_stretch(&doubled).unwrap().0 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn self_evaluation_closes() {
        let t = spiral_transform();
        let gt = gt_mesh_with(&t.spiral, 0.05, 2.0, |p| t.forward(p)).unwrap();
        assert_eq!(metric_wjf(&gt, &t, 20).unwrap(), 0.0);
        let opts = MrwdOptions {
            slices: 10,
            angles: 50,
            dtheta: 0.05,
            dz: 2.0,
        };
        assert_eq!(metric_mrwd(&gt, &t, &opts).unwrap(), 0.0);
    }

    #[test]
    fn mrwd_sees_a_constant_offset() {
        let t = spiral_transform();
        let d = 1.5;
        // windings pushed radially outward by d
        let gt = gt_mesh_with(&t.spiral, 0.02, 2.0, |p| {
            let q = t.forward(p)?;
            let r = q.xy().norm();
            Ok(Vec3::new(q.x * (r + d) / r, q.y * (r + d) / r, q.z))
        })
        .unwrap();
        let opts = MrwdOptions {
            slices: 5,
            angles: 40,
            dtheta: 0.02,
            dz: 2.0,
        };
        let v = metric_mrwd(&gt, &t, &opts).unwrap();
        assert!((v - d).abs() < 0.01, "mrwd {v}");
    }

    #[test]
    fn one_displaced_endpoint_is_one_jump() {
        let t = spiral_transform();
        let gt = gt_mesh_with(&t.spiral, 0.1, 8.0, |p| t.forward(p)).unwrap();
        let mut segs = slice_segments(&gt, 20.0);
        assert_eq!(jump_fraction(&segs, &t).unwrap(), 0.0);
        let k = segs.iter().position(|s| s.a.xy().norm() > 30.0).unwrap();
        let a = segs[k].a;
        let r = a.xy().norm();
        let r2 = r + 0.6 * t.spiral.spacing();
        segs[k].a = Vec3::new(a.x * r2 / r, a.y * r2 / r, a.z);
        assert_eq!(jump_fraction(&segs, &t).unwrap(), 1.0 / segs.len() as f64);
    }
}
