//! Triangle meshes, exact point-to-triangle distance, a uniform-grid spatial
//! hash, and triangle-triangle intersection.

use std::collections::HashMap;

use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Optional per-vertex winding index.
    pub winding: Option<Vec<i32>>,
}

impl TriMesh {
    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.area(f)).sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    (closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2]) - p).norm()
}

type Cell = [i64; 3];

/// Uniform grid over triangle bounding boxes.
#[derive(Debug, Clone)]
pub struct TriangleHash {
    cell: f64,
    cells: HashMap<Cell, Vec<u32>>,
    lo: Cell,
    hi: Cell,
}

impl TriangleHash {
    pub fn new(mesh: &TriMesh, cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for f in 0..mesh.faces.len() {
            let t = mesh.triangle(f);
            let a = Self::key(&t[0].inf(&t[1]).inf(&t[2]), cell);
            let b = Self::key(&t[0].sup(&t[1]).sup(&t[2]), cell);
            for i in a[0]..=b[0] {
                for j in a[1]..=b[1] {
                    for k in a[2]..=b[2] {
                        cells.entry([i, j, k]).or_default().push(f as u32);
                    }
                }
            }
            for d in 0..3 {
                lo[d] = lo[d].min(a[d]);
                hi[d] = hi[d].max(b[d]);
            }
        }
        TriangleHash { cell, cells, lo, hi }
    }

    fn key(p: &Vec3, cell: f64) -> Cell {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Triangles registered in cells overlapping the box `[lo, hi]`.
    pub fn candidates(&self, lo: &Vec3, hi: &Vec3, out: &mut Vec<u32>) {
        out.clear();
        let a = Self::key(lo, self.cell);
        let b = Self::key(hi, self.cell);
        for i in a[0].max(self.lo[0])..=b[0].min(self.hi[0]) {
            for j in a[1].max(self.lo[1])..=b[1].min(self.hi[1]) {
                for k in a[2].max(self.lo[2])..=b[2].min(self.hi[2]) {
                    if let Some(v) = self.cells.get(&[i, j, k]) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Exact distance from `p` to the nearest triangle of `mesh`.
    pub fn distance(&self, mesh: &TriMesh, p: &Vec3) -> Option<f64> {
        if mesh.faces.is_empty() {
            return None;
        }
        let c = Self::key(p, self.cell);
        let mut best = f64::INFINITY;
        let mut buf = Vec::new();
        let max_ring = (0..3)
            .map(|d| (c[d] - self.lo[d]).abs().max((self.hi[d] - c[d]).abs()))
            .max()
            .unwrap_or(0);
        let mut ring = 0i64;
        loop {
            // Everything within `ring` cells of p's cell has been examined,
            // so any unseen triangle lies at least `ring · cell` away.
            let r = ring as f64 * self.cell;
            let lo = Vec3::new(p.x - r, p.y - r, p.z - r);
            let hi = Vec3::new(p.x + r, p.y + r, p.z + r);
            self.candidates(&lo, &hi, &mut buf);
            for &f in &buf {
                best = best.min(point_triangle_distance(p, &mesh.triangle(f as usize)));
            }
            if best <= r || ring > max_ring {
                return Some(best);
            }
            ring = (ring * 2).max(1);
        }
    }
}

fn orient(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a))
}

/// Whether segment `pq` crosses the interior of triangle `t`, tested
/// with orientation predicates.
fn segment_hits_triangle(p: &Vec3, q: &Vec3, t: &[Vec3; 3], eps: f64) -> bool {
    let sp = orient(&t[0], &t[1], &t[2], p);
    let sq = orient(&t[0], &t[1], &t[2], q);
    if (sp > eps && sq > eps) || (sp < -eps && sq < -eps) {
        return false;
    }
    if sp.abs() <= eps && sq.abs() <= eps {
        return false; // coplanar contact is handled by the caller's shared-vertex logic
    }
    let s1 = orient(p, q, &t[0], &t[1]);
    let s2 = orient(p, q, &t[1], &t[2]);
    let s3 = orient(p, q, &t[2], &t[0]);
    (s1 > eps && s2 > eps && s3 > eps) || (s1 < -eps && s2 < -eps && s3 < -eps)
}

/// Whether two triangles intersect other than along shared vertices.
/// Triangles that share vertices are only reported when one pierces the
/// other away from the shared part.
pub fn triangles_intersect(a: &[Vec3; 3], b: &[Vec3; 3]) -> bool {
    let scale = a
        .iter()
        .chain(b.iter())
        .map(|v| v.amax())
        .fold(1.0_f64, f64::max);
    let eps = 1e-12 * scale * scale * scale;
    for i in 0..3 {
        let (p, q) = (&a[i], &a[(i + 1) % 3]);
        if segment_hits_triangle(p, q, b, eps) {
            return true;
        }
        let (p, q) = (&b[i], &b[(i + 1) % 3]);
        if segment_hits_triangle(p, q, a, eps) {
            return true;
        }
    }
    false
}

/// Counts intersecting pairs of triangles that share no vertex.
pub fn self_intersections(mesh: &TriMesh) -> usize {
    let Some((lo, hi)) = mesh.bounds() else { return 0 };
    let n = mesh.faces.len().max(1) as f64;
    let cell = ((hi - lo).amax() / n.cbrt()).max(1e-9);
    let hash = TriangleHash::new(mesh, cell);
    let counts = crate::par::map_range(mesh.faces.len(), |f| {
        let t = mesh.triangle(f);
        let fa = mesh.faces[f];
        let mut buf = Vec::new();
        hash.candidates(&t[0].inf(&t[1]).inf(&t[2]), &t[0].sup(&t[1]).sup(&t[2]), &mut buf);
        buf.iter()
            .filter(|&&g| (g as usize) > f)
            .filter(|&&g| {
                let fb = mesh.faces[g as usize];
                !fa.iter().any(|v| fb.contains(v))
            })
            .filter(|&&g| triangles_intersect(&t, &mesh.triangle(g as usize)))
            .count()
    });
    counts.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tri() -> [Vec3; 3] {
        [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]
    }

    #[test]
    fn point_triangle_regions() {
        let t = tri();
        assert_relative_eq!(point_triangle_distance(&Vec3::new(0.2, 0.2, 3.0), &t), 3.0);
        assert_relative_eq!(point_triangle_distance(&Vec3::new(-1.0, -1.0, 0.0), &t), 2f64.sqrt());
        assert_relative_eq!(point_triangle_distance(&Vec3::new(0.5, -2.0, 0.0), &t), 2.0);
        assert_relative_eq!(point_triangle_distance(&Vec3::new(1.0, 1.0, 0.0), &t), 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn hash_distance_matches_brute_force() {
        let mut mesh = TriMesh::default();
        for i in 0..10 {
            for j in 0..10 {
                mesh.vertices.push(Vec3::new(i as f64, j as f64, ((i * j) as f64 * 0.1).sin()));
            }
        }
        for i in 0..9u32 {
            for j in 0..9u32 {
                let v = i * 10 + j;
                mesh.faces.push([v, v + 10, v + 1]);
                mesh.faces.push([v + 1, v + 10, v + 11]);
            }
        }
        let hash = TriangleHash::new(&mesh, 1.5);
        for k in 0..50 {
            let p = Vec3::new((k as f64 * 0.37) % 12.0 - 1.0, (k as f64 * 0.91) % 11.0, (k as f64 * 0.13) % 4.0 - 2.0);
            let brute = (0..mesh.faces.len())
                .map(|f| point_triangle_distance(&p, &mesh.triangle(f)))
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(hash.distance(&mesh, &p).unwrap(), brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn intersection_cases() {
        let a = tri();
        let pierce = [Vec3::new(0.2, 0.2, -1.0), Vec3::new(0.3, 0.2, 1.0), Vec3::new(0.2, 0.3, 1.0)];
        assert!(triangles_intersect(&a, &pierce));
        let above = [Vec3::new(0.2, 0.2, 1.0), Vec3::new(0.3, 0.2, 1.0), Vec3::new(0.2, 0.3, 1.0)];
        assert!(!triangles_intersect(&a, &above));
        let far = [Vec3::new(5.0, 0.2, -1.0), Vec3::new(5.3, 0.2, 1.0), Vec3::new(5.2, 0.3, 1.0)];
        assert!(!triangles_intersect(&a, &far));
    }

    #[test]
    fn counts_crossing_sheets() {
        let mut mesh = TriMesh::default();
        mesh.vertices.extend(tri());
        mesh.vertices.extend([Vec3::new(0.2, 0.2, -1.0), Vec3::new(0.3, 0.2, 1.0), Vec3::new(0.2, 0.3, 1.0)]);
        mesh.faces = vec![[0, 1, 2], [3, 4, 5]];
        assert_eq!(self_intersections(&mesh), 1);
    }
}
