//! Binary masks and connected components.

use crate::volume::Volume;

/// Boolean voxel grid with x fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub dims: [usize; 3],
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(dims: [usize; 3]) -> Self {
        Mask {
            dims,
            data: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    #[inline]
    pub fn index(&self, v: [usize; 3]) -> usize {
        (v[2] * self.dims[1] + v[1]) * self.dims[0] + v[0]
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        [x, y, i / (self.dims[0] * self.dims[1])]
    }

    #[inline]
    pub fn get(&self, v: [usize; 3]) -> bool {
        self.data[self.index(v)]
    }

    /// Value at a signed position; false outside the grid.
    #[inline]
    pub fn get_signed(&self, v: [i64; 3]) -> bool {
        if (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < self.dims[a]) {
            self.get([v[0] as usize, v[1] as usize, v[2] as usize])
        } else {
            false
        }
    }

    pub fn set(&mut self, v: [usize; 3], value: bool) {
        let i = self.index(v);
        self.data[i] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

/// Voxels whose probability is at least `tau`.
pub fn threshold_volume(v: &Volume, channel: usize, tau: f64) -> Mask {
    let cut = tau * 255.0;
    Mask {
        dims: v.dims,
        data: v.channels[channel].iter().map(|&p| p as f64 >= cut).collect(),
    }
}

/// All offsets of the 3×3×3 neighborhood except the center.
pub(crate) fn offsets26() -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(26);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// 26-connected components, each as sorted voxel coordinates, ordered by
/// their smallest voxel index.
pub fn fiber_components(mask: &Mask) -> Vec<Vec<[usize; 3]>> {
    let offs = offsets26();
    let mut label = vec![false; mask.data.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.data.len() {
        if !mask.data[start] || label[start] {
            continue;
        }
        label[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let c = mask.coords(i);
            for o in &offs {
                let n = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
                if mask.get_signed(n) {
                    let j = mask.index([n[0] as usize, n[1] as usize, n[2] as usize]);
                    if !label[j] {
                        label[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp.into_iter().map(|i| mask.coords(i)).collect());
    }
    out
}

/// A connected set of pixels inside one axis-aligned slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceComponent {
    /// Axis normal to the slice (0 = x, 1 = y, 2 = z).
    pub axis: usize,
    pub slice: usize,
    pub voxels: Vec<[usize; 3]>,
}

/// In-plane axes for slices normal to `axis`.
#[inline]
pub(crate) fn plane_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// 8-connected components of one slice.
pub fn slice_components(mask: &Mask, axis: usize, slice: usize) -> Vec<SliceComponent> {
    let (u, v) = plane_axes(axis);
    let (nu, nv) = (mask.dims[u], mask.dims[v]);
    let at = |a: usize, b: usize| {
        let mut c = [0usize; 3];
        c[axis] = slice;
        c[u] = a;
        c[v] = b;
        c
    };
    let mut seen = vec![false; nu * nv];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    // scan in increasing voxel index: v is the slower in-plane axis
    for b in 0..nv {
        for a in 0..nu {
            if seen[b * nu + a] || !mask.get(at(a, b)) {
                continue;
            }
            seen[b * nu + a] = true;
            stack.push((a, b));
            let mut comp = Vec::new();
            while let Some((a, b)) = stack.pop() {
                comp.push(at(a, b));
                for db in -1i64..=1 {
                    for da in -1i64..=1 {
                        let (na, nb) = (a as i64 + da, b as i64 + db);
                        if na < 0 || nb < 0 || na >= nu as i64 || nb >= nv as i64 {
                            continue;
                        }
                        let (na, nb) = (na as usize, nb as usize);
                        if !seen[nb * nu + na] && mask.get(at(na, nb)) {
                            seen[nb * nu + na] = true;
                            stack.push((na, nb));
                        }
                    }
                }
            }
            comp.sort_unstable_by_key(|c| mask.index(*c));
            out.push(SliceComponent { axis, slice, voxels: comp });
        }
    }
    out
}

/// Planar components of every slice in all three orientations, ordered by
/// axis, then slice, then smallest voxel index.
pub fn surface_components_2d(mask: &Mask) -> Vec<SliceComponent> {
    let jobs: Vec<(usize, usize)> = (0..3).flat_map(|a| (0..mask.dims[a]).map(move |s| (a, s))).collect();
    crate::par::map(&jobs, |&(a, s)| slice_components(mask, a, s))
        .into_iter()
        .flatten()
        .collect()
}
