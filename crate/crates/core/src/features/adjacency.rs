//! Relative winding links between surface paths by outward ray casting.

use std::collections::{BTreeMap, HashMap};

use super::{NormalSample, Path, WindingLink};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjacencyParams {
    /// Longest ray, in length units.
    pub max_ray: f64,
    /// Hit radius, in length units. Rays advance by half of it.
    pub hit_tol: f64,
    /// Rays start this far from their origin so that crossing paths on the
    /// same sheet are not reported.
    pub min_ray: f64,
}

/// Uniform hash grid over points.
pub(crate) struct PointGrid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl PointGrid {
    pub(crate) fn new<'a>(points: impl IntoIterator<Item = &'a Vec3>, cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.into_iter().enumerate() {
            cells.entry(Self::key_of(p, cell)).or_default().push(i as u32);
        }
        PointGrid { cell, cells }
    }

    fn key_of(p: &Vec3, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Calls `f` on every point index in cells overlapping the ball.
    pub(crate) fn visit(&self, p: &Vec3, radius: f64, mut f: impl FnMut(u32)) {
        let r = (radius / self.cell).ceil() as i64;
        let k = Self::key_of(p, self.cell);
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if let Some(v) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        v.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of the nearest point, searching outward ring by ring.
    pub(crate) fn nearest(&self, p: &Vec3, points: &[Vec3], max_radius: f64) -> Option<u32> {
        if self.is_empty() {
            return None;
        }
        let mut radius = self.cell;
        loop {
            let mut best: Option<(f64, u32)> = None;
            self.visit(p, radius, |i| {
                let d = (points[i as usize] - p).norm();
                if d <= radius && best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                    best = Some((d, i));
                }
            });
            if let Some((_, i)) = best {
                return Some(i);
            }
            if radius >= max_radius {
                return None;
            }
            radius = (radius * 2.0).min(max_radius);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjacencyResult {
    pub links: Vec<WindingLink>,
    /// Median hit distance over kept links.
    pub spacing: Option<f64>,
}

struct Hit {
    from: usize,
    to: usize,
    origin: Vec3,
    point: Vec3,
    distance: f64,
}

/// Nodes of `n` lying on a directed cycle (strongly connected components
/// with more than one node).
fn cyclic_nodes(n: usize, edges: &BTreeMap<(usize, usize), Vec<usize>>) -> Vec<bool> {
    let mut succ = vec![Vec::new(); n];
    for &(a, b) in edges.keys() {
        succ[a].push(b);
    }
    // iterative Tarjan
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut cyclic = vec![false; n];
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut k)) = work.last_mut() {
            if *k < succ[v].len() {
                let w = succ[v][*k];
                *k += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(u, _)) = work.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    if comp.len() > 1 {
                        comp.iter().for_each(|&w| cyclic[w] = true);
                    }
                }
            }
        }
    }
    cyclic
}

/// Casts a ray from every point of every path along the nearest normal,
/// links paths by first hits, drops paths on directed cycles and keeps
/// pairs whose rays agree by strict majority. Links point outward with
/// offset +1.
pub fn winding_adjacency(paths: &[&Path], normals: &[NormalSample], params: &AdjacencyParams) -> AdjacencyResult {
    if paths.len() < 2 || normals.is_empty() {
        return AdjacencyResult::default();
    }
    let mut owners = Vec::new();
    let mut all = Vec::new();
    for (k, p) in paths.iter().enumerate() {
        for q in &p.points {
            owners.push(k);
            all.push(*q);
        }
    }
    let grid = PointGrid::new(&all, params.hit_tol.max(1e-9));
    let normal_pos: Vec<Vec3> = normals.iter().map(|n| n.position).collect();
    let normal_grid = PointGrid::new(&normal_pos, params.max_ray.max(params.hit_tol));
    let step = 0.5 * params.hit_tol;

    let per_path = crate::par::map_range(paths.len(), |k| {
        let mut hits = Vec::new();
        for origin in &paths[k].points {
            let Some(ni) = normal_grid.nearest(origin, &normal_pos, f64::INFINITY) else {
                continue;
            };
            let dir = normals[ni as usize].normal;
            let mut t = params.min_ray.max(step);
            while t <= params.max_ray {
                let q = origin + dir * t;
                let mut best: Option<(f64, u32)> = None;
                grid.visit(&q, params.hit_tol, |i| {
                    if owners[i as usize] == k {
                        return;
                    }
                    let d = (all[i as usize] - q).norm();
                    if d <= params.hit_tol && best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                        best = Some((d, i));
                    }
                });
                if let Some((_, i)) = best {
                    let point = all[i as usize];
                    hits.push(Hit {
                        from: k,
                        to: owners[i as usize],
                        origin: *origin,
                        point,
                        distance: (point - origin).norm(),
                    });
                    break;
                }
                t += step;
            }
        }
        hits
    });
    let hits: Vec<Hit> = per_path.into_iter().flatten().collect();

    let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (h, hit) in hits.iter().enumerate() {
        edges.entry((hit.from, hit.to)).or_default().push(h);
    }
    let cyclic = cyclic_nodes(paths.len(), &edges);
    let mut links = Vec::new();
    let mut distances = Vec::new();
    for (&(a, b), rays) in &edges {
        if cyclic[a] || cyclic[b] {
            continue;
        }
        let against = edges.get(&(b, a)).map_or(0, Vec::len);
        if 2 * rays.len() <= rays.len() + against {
            continue;
        }
        distances.extend(rays.iter().map(|&h| hits[h].distance));
        links.push(WindingLink {
            from: paths[a].id,
            to: paths[b].id,
            offset: 1,
            point_pairs: rays.iter().map(|&h| (hits[h].origin, hits[h].point)).collect(),
            votes: rays.len() as u32,
        });
    }
    if links.is_empty() {
        log::warn!("winding adjacency found no links");
    }
    AdjacencyResult {
        links,
        spacing: median(&mut distances),
    }
}

pub(crate) fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}
