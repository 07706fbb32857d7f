//! Topology-preserving thinning of pixel and voxel sets to curves.
//!
//! Both variants peel border points in directional sub-iterations and only
//! remove simple points that are not curve ends, so connectivity and the
//! number of pieces are preserved.

use std::sync::OnceLock;

/// Dense occupancy over a padded bounding box.
struct Bitmap<const D: usize> {
    lo: [i64; D],
    dims: [usize; D],
    data: Vec<bool>,
}

impl<const D: usize> Bitmap<D> {
    fn new(points: &[[i64; D]]) -> Self {
        let mut lo = [i64::MAX; D];
        let mut hi = [i64::MIN; D];
        for p in points {
            for a in 0..D {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut dims = [0usize; D];
        for a in 0..D {
            lo[a] -= 1;
            dims[a] = (hi[a] - lo[a] + 2) as usize;
        }
        let mut b = Bitmap {
            lo,
            dims,
            data: vec![false; dims.iter().product()],
        };
        for p in points {
            let i = b.idx(p);
            b.data[i] = true;
        }
        b
    }

    #[inline]
    fn idx(&self, p: &[i64; D]) -> usize {
        let mut i = 0usize;
        for a in (0..D).rev() {
            i = i * self.dims[a] + (p[a] - self.lo[a]) as usize;
        }
        i
    }

    #[inline]
    fn get(&self, p: &[i64; D]) -> bool {
        for a in 0..D {
            let r = p[a] - self.lo[a];
            if r < 0 || r as usize >= self.dims[a] {
                return false;
            }
        }
        self.data[self.idx(p)]
    }

    fn set(&mut self, p: &[i64; D], v: bool) {
        let i = self.idx(p);
        self.data[i] = v;
    }

    /// Occupied points in increasing index order.
    fn points(&self) -> Vec<[i64; D]> {
        let mut out = Vec::new();
        for (i, &v) in self.data.iter().enumerate() {
            if v {
                let mut p = [0i64; D];
                let mut r = i;
                for a in 0..D {
                    p[a] = (r % self.dims[a]) as i64 + self.lo[a];
                    r /= self.dims[a];
                }
                out.push(p);
            }
        }
        out
    }
}

fn add<const D: usize>(p: &[i64; D], o: &[i64; D]) -> [i64; D] {
    let mut q = *p;
    for a in 0..D {
        q[a] += o[a];
    }
    q
}

/// Neighborhood offsets in a fixed order, with the adjacency relations the
/// simple-point test needs.
struct Neighborhood<const D: usize> {
    offsets: Vec<[i64; D]>,
    /// Foreground adjacency (8 in 2D, 26 in 3D) between neighborhood cells.
    fg_adj: Vec<Vec<usize>>,
    /// Background adjacency (4 in 2D, 6 in 3D) between neighborhood cells.
    bg_adj: Vec<Vec<usize>>,
    /// Cells considered for the background test.
    bg_cells: Vec<bool>,
    /// Cells face-adjacent to the center.
    face: Vec<bool>,
}

impl<const D: usize> Neighborhood<D> {
    fn new() -> Self {
        let mut offsets = Vec::new();
        let n = 3usize.pow(D as u32);
        for k in 0..n {
            let mut o = [0i64; D];
            let mut r = k;
            for a in 0..D {
                o[a] = (r % 3) as i64 - 1;
                r /= 3;
            }
            if o.iter().any(|v| *v != 0) {
                offsets.push(o);
            }
        }
        let manhattan = |o: &[i64; D]| o.iter().map(|v| v.abs()).sum::<i64>();
        let diff = |a: &[i64; D], b: &[i64; D]| {
            let mut d = [0i64; D];
            for i in 0..D {
                d[i] = a[i] - b[i];
            }
            d
        };
        let m = offsets.len();
        let mut fg_adj = vec![Vec::new(); m];
        let mut bg_adj = vec![Vec::new(); m];
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let d = diff(&offsets[i], &offsets[j]);
                if d.iter().all(|v| v.abs() <= 1) {
                    fg_adj[i].push(j);
                }
                if manhattan(&d) == 1 {
                    bg_adj[i].push(j);
                }
            }
        }
        let bg_cells = offsets.iter().map(|o| D == 2 || manhattan(o) <= 2).collect();
        let face = offsets.iter().map(|o| manhattan(o) == 1).collect();
        Neighborhood {
            offsets,
            fg_adj,
            bg_adj,
            bg_cells,
            face,
        }
    }

    /// Simple-point test from the occupancy of the neighborhood cells.
    fn is_simple(&self, occ: &[bool]) -> bool {
        let m = self.offsets.len();
        let mut seen = vec![false; m];
        let mut stack = Vec::new();
        // exactly one foreground component
        let mut fg = 0;
        for s in 0..m {
            if !occ[s] || seen[s] {
                continue;
            }
            fg += 1;
            if fg > 1 {
                return false;
            }
            seen[s] = true;
            stack.push(s);
            while let Some(i) = stack.pop() {
                for &j in &self.fg_adj[i] {
                    if occ[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if fg != 1 {
            return false;
        }
        // exactly one background component touching a face neighbor
        let mut seen = vec![false; m];
        let mut bg = 0;
        for s in 0..m {
            if occ[s] || seen[s] || !self.face[s] {
                continue;
            }
            bg += 1;
            if bg > 1 {
                return false;
            }
            seen[s] = true;
            stack.push(s);
            while let Some(i) = stack.pop() {
                for &j in &self.bg_adj[i] {
                    if !occ[j] && !seen[j] && self.bg_cells[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        bg == 1
    }
}

fn neighborhood2() -> &'static Neighborhood<2> {
    static N: OnceLock<Neighborhood<2>> = OnceLock::new();
    N.get_or_init(Neighborhood::new)
}

fn neighborhood3() -> &'static Neighborhood<3> {
    static N: OnceLock<Neighborhood<3>> = OnceLock::new();
    N.get_or_init(Neighborhood::new)
}

fn thin<const D: usize>(points: &[[i64; D]], nb: &Neighborhood<D>) -> Vec<[i64; D]> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut bm = Bitmap::<D>::new(points);
    let mut directions = Vec::new();
    for a in 0..D {
        for s in [-1i64, 1] {
            let mut d = [0i64; D];
            d[a] = s;
            directions.push(d);
        }
    }
    let mut occ = vec![false; nb.offsets.len()];
    let removable = |bm: &Bitmap<D>, p: &[i64; D], occ: &mut Vec<bool>| {
        let mut count = 0;
        for (k, o) in nb.offsets.iter().enumerate() {
            occ[k] = bm.get(&add(p, o));
            count += occ[k] as usize;
        }
        count > 1 && nb.is_simple(occ)
    };
    loop {
        let mut changed = false;
        for d in &directions {
            let candidates: Vec<[i64; D]> = bm
                .points()
                .into_iter()
                .filter(|p| !bm.get(&add(p, d)))
                .collect();
            for p in candidates {
                if removable(&bm, &p, &mut occ) {
                    bm.set(&p, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    bm.points()
}

/// Thins a planar pixel set (8-connected foreground) to a curve skeleton.
pub fn thin_2d(pixels: &[[i64; 2]]) -> Vec<[i64; 2]> {
    thin(pixels, neighborhood2())
}

/// Thins a voxel set (26-connected foreground) to a curve skeleton.
pub fn thin_3d(voxels: &[[i64; 3]]) -> Vec<[i64; 3]> {
    thin(voxels, neighborhood3())
}
