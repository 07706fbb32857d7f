//! Lattice meshes of the fitted surface, their UV layout, and unrolled
//! volume sampling.

use crate::error::{Error, Result};
use crate::geometry::{spiral_point_unchecked, SpiralParams, Vec3};
use crate::phantom::{lattice_faces, theta_lattice, z_lattice};
use crate::transform::ComposedTransform;
use crate::trimesh::TriMesh;
use crate::volume::Volume;

/// Vertex lattice over (θ, z); vertex `(i, j)` is stored at `i·nj + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    pub ni: usize,
    pub nj: usize,
    pub thetas: Vec<f64>,
    pub zs: Vec<f64>,
    pub positions: Vec<Vec3>,
    /// Per-vertex (U, V) in length units; empty until assigned.
    pub uv: Vec<[f64; 2]>,
}

impl QuadMesh {
    #[inline]
    pub fn id(&self, i: usize, j: usize) -> usize {
        i * self.nj + j
    }

    pub fn face_count(&self) -> usize {
        self.ni.saturating_sub(1) * self.nj.saturating_sub(1)
    }

    /// Quads as vertex index quadruples in lattice order.
    pub fn quads(&self) -> Vec<[u32; 4]> {
        let mut out = Vec::with_capacity(self.face_count());
        for i in 0..self.ni.saturating_sub(1) {
            for j in 0..self.nj.saturating_sub(1) {
                out.push([
                    self.id(i, j) as u32,
                    self.id(i + 1, j) as u32,
                    self.id(i + 1, j + 1) as u32,
                    self.id(i, j + 1) as u32,
                ]);
            }
        }
        out
    }

    /// Splits every quad along its `(i + j)`-parity diagonal and labels
    /// vertices with their winding index.
    pub fn to_trimesh(&self) -> TriMesh {
        TriMesh {
            vertices: self.positions.clone(),
            faces: lattice_faces(self.ni, self.nj),
            winding: Some(
                (0..self.ni * self.nj)
                    .map(|k| (self.thetas[k / self.nj] / std::f64::consts::TAU).floor() as i32)
                    .collect(),
            ),
        }
    }

    /// U strictly increasing along i and V strictly increasing along j.
    pub fn uv_monotone(&self) -> bool {
        if self.uv.len() != self.positions.len() {
            return false;
        }
        for i in 0..self.ni {
            for j in 0..self.nj {
                let uv = self.uv[self.id(i, j)];
                if i + 1 < self.ni && self.uv[self.id(i + 1, j)][0] <= uv[0] {
                    return false;
                }
                if j + 1 < self.nj && self.uv[self.id(i, j + 1)][1] <= uv[1] {
                    return false;
                }
            }
        }
        true
    }
}

/// Default lattice steps: `dz` is a quarter winding spacing and `dtheta`
/// gives chords of about `dz` on the outermost winding.
pub fn default_steps(spiral: &SpiralParams) -> (f64, f64) {
    let dz = 0.25 * spiral.spacing();
    (dz / spiral.outer_radius(), dz)
}

/// Samples the deformed spiral on a regular (θ, z) lattice and assigns UV.
pub fn extract_mesh(t: &ComposedTransform, dtheta: f64, dz: f64) -> Result<QuadMesh> {
    if !(dtheta > 0.0 && dz > 0.0) {
        return Err(Error::Domain("dtheta and dz must be positive".into()));
    }
    let sp = &t.spiral;
    let thetas = theta_lattice(sp.theta_max, dtheta);
    let zs = z_lattice(sp.z_min, sp.z_max, dz);
    let (ni, nj) = (thetas.len(), zs.len());
    let positions = crate::par::map_range(ni * nj, |k| t.forward(&spiral_point_unchecked(thetas[k / nj], zs[k % nj], sp)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut mesh = QuadMesh {
        ni,
        nj,
        thetas,
        zs,
        positions,
        uv: Vec::new(),
    };
    assign_uv(&mut mesh, sp);
    Ok(mesh)
}

/// U is the cumulative chord length along the canonical spiral from θ = 0,
/// V is the height above `z_min`.
pub fn assign_uv(mesh: &mut QuadMesh, spiral: &SpiralParams) {
    let mut u = Vec::with_capacity(mesh.ni);
    let mut acc = 0.0;
    let mut prev = spiral_point_unchecked(0.0, 0.0, spiral);
    for &th in &mesh.thetas {
        let p = spiral_point_unchecked(th, 0.0, spiral);
        acc += (p - prev).norm();
        u.push(acc);
        prev = p;
    }
    mesh.uv = (0..mesh.ni * mesh.nj)
        .map(|k| [u[k / mesh.nj], mesh.zs[k % mesh.nj] - spiral.z_min])
        .collect();
}

/// Flattened image stack with dims `(ni, nj, layers)`, stored with the layer
/// index slowest and i fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledStack {
    pub ni: usize,
    pub nj: usize,
    pub layers: usize,
    pub data: Vec<f32>,
    /// Vertices whose normal was degenerate; their samples are 0.
    pub degenerate: usize,
}

impl UnrolledStack {
    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> f32 {
        self.data[(l * self.nj + j) * self.ni + i]
    }

    pub fn layer_mean(&self, l: usize) -> f64 {
        let n = self.ni * self.nj;
        self.data[l * n..(l + 1) * n].iter().map(|v| *v as f64).sum::<f64>() / n as f64
    }
}

/// Per-vertex unit normal from the lattice tangents, or `None` when they
/// are parallel.
pub fn vertex_normal(mesh: &QuadMesh, i: usize, j: usize) -> Option<Vec3> {
    let p = |i: usize, j: usize| mesh.positions[mesh.id(i, j)];
    let ti = p((i + 1).min(mesh.ni - 1), j) - p(i.saturating_sub(1), j);
    let tj = p(i, (j + 1).min(mesh.nj - 1)) - p(i, j.saturating_sub(1));
    let n = ti.cross(&tj);
    let len = n.norm();
    (len > 0.0 && len.is_finite()).then(|| n / len)
}

/// Samples `channel` of `volume` along each vertex normal at `layers`
/// offsets spread over `[-thickness/2, thickness/2]`.
pub fn sample_unrolled_volume(mesh: &QuadMesh, volume: &Volume, channel: usize, thickness: f64, layers: usize) -> Result<UnrolledStack> {
    if layers == 0 || !(thickness >= 0.0) {
        return Err(Error::Domain("layers must be positive and thickness non-negative".into()));
    }
    if channel >= volume.channels.len() {
        return Err(Error::Domain(format!("volume has no channel {channel}")));
    }
    let offsets: Vec<f64> = (0..layers)
        .map(|l| if layers == 1 { 0.0 } else { -0.5 * thickness + thickness * l as f64 / (layers - 1) as f64 })
        .collect();
    let n = mesh.ni * mesh.nj;
    let columns = crate::par::map_range(n, |k| {
        let (i, j) = (k / mesh.nj, k % mesh.nj);
        match vertex_normal(mesh, i, j) {
            Some(nrm) => (offsets.iter().map(|o| volume.sample(channel, &(mesh.positions[k] + nrm * *o)) as f32).collect(), false),
            None => (vec![0.0f32; layers], true),
        }
    });
    let mut data = vec![0.0f32; n * layers];
    let mut degenerate = 0;
    for (k, (col, bad)) in columns.into_iter().enumerate() {
        let (i, j) = (k / mesh.nj, k % mesh.nj);
        degenerate += bad as usize;
        for (l, v) in col.into_iter().enumerate() {
            data[(l * mesh.nj + j) * mesh.ni + i] = v;
        }
    }
    Ok(UnrolledStack {
        ni: mesh.ni,
        nj: mesh.nj,
        layers,
        data,
        degenerate,
    })
}
