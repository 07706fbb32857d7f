//! Volume to feature set.

use serde::{Deserialize, Serialize};

use super::adjacency::{winding_adjacency, AdjacencyParams};
use super::graph::{longest_chain_decomposition, skeleton_graph};
use super::mask::{fiber_components, plane_axes, surface_components_2d, threshold_volume, SliceComponent};
use super::normals::{estimate_normals, orient_outward, NormalParams};
use super::thin::{thin_2d, thin_3d};
use super::{Bounds, FeatureSet, Path, PathKind};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::volume::Volume;

pub const SURFACE_CHANNEL: usize = 0;
pub const FIBER_H_CHANNEL: usize = 1;
pub const FIBER_V_CHANNEL: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub tau: f64,
    /// Chains with fewer voxels are dropped.
    pub min_path_len: usize,
    /// Expected distance between windings, in length units.
    pub prior_spacing: f64,
    /// Hit radius in voxels.
    pub hit_tol: f64,
    /// Ray length as a multiple of the prior spacing.
    pub max_ray_factor: f64,
    /// Minimum ray length as a multiple of the prior spacing.
    pub min_ray_factor: f64,
    pub normal_window: usize,
    pub normal_threshold: f64,
    pub normal_cell: usize,
    pub seed: u64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        let n = NormalParams::default();
        FeatureParams {
            tau: 0.5,
            min_path_len: 10,
            prior_spacing: 20.0,
            hit_tol: 1.5,
            max_ray_factor: 3.0,
            min_ray_factor: 0.25,
            normal_window: n.window,
            normal_threshold: n.mag_threshold,
            normal_cell: n.cell,
            seed: 0,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.prior_spacing > 0.0 && self.prior_spacing.is_finite()) {
            return bad("prior_spacing must be positive");
        }
        if !(self.hit_tol > 0.0) || !(self.max_ray_factor > 0.0) || !(self.min_ray_factor >= 0.0) {
            return bad("ray parameters must be positive");
        }
        if self.min_ray_factor >= self.max_ray_factor {
            return bad("min_ray_factor must be below max_ray_factor");
        }
        if self.normal_window < 3 {
            return bad("normal_window must be at least 3");
        }
        if self.normal_cell == 0 {
            return bad("normal_cell must be positive");
        }
        Ok(())
    }

    pub fn normal_params(&self) -> NormalParams {
        NormalParams {
            window: self.normal_window,
            mag_threshold: self.normal_threshold,
            cell: self.normal_cell,
            seed: self.seed,
        }
    }
}

fn voxel_position(v: &Volume, p: &[i64; 3]) -> Vec3 {
    v.center(p[0] as usize, p[1] as usize, p[2] as usize)
}

/// Chains of a thinned voxel set, as point sequences.
fn chains(v: &Volume, skeleton: &[[i64; 3]], min_len: usize) -> Vec<Vec<Vec3>> {
    let (nodes, g) = skeleton_graph(skeleton);
    longest_chain_decomposition(&g, min_len)
        .into_iter()
        .map(|c| c.iter().map(|&i| voxel_position(v, &nodes[i])).collect())
        .collect()
}

/// Thinned voxels of one planar component.
pub fn skeletonize_slice(c: &SliceComponent) -> Vec<[i64; 3]> {
    let (u, w) = plane_axes(c.axis);
    let pixels: Vec<[i64; 2]> = c.voxels.iter().map(|p| [p[u] as i64, p[w] as i64]).collect();
    thin_2d(&pixels)
        .into_iter()
        .map(|q| {
            let mut p = [0i64; 3];
            p[c.axis] = c.slice as i64;
            p[u] = q[0];
            p[w] = q[1];
            p
        })
        .collect()
}

/// Thinned voxels of one 3D component.
pub fn skeletonize(component: &[[usize; 3]]) -> Vec<[i64; 3]> {
    let voxels: Vec<[i64; 3]> = component.iter().map(|p| [p[0] as i64, p[1] as i64, p[2] as i64]).collect();
    thin_3d(&voxels)
}

fn surface_paths(v: &Volume, p: &FeatureParams) -> Vec<Vec<Vec3>> {
    let mask = threshold_volume(v, SURFACE_CHANNEL, p.tau);
    let comps = surface_components_2d(&mask);
    crate::par::map(&comps, |c| chains(v, &skeletonize_slice(c), p.min_path_len))
        .into_iter()
        .flatten()
        .collect()
}

fn fiber_paths(v: &Volume, channel: usize, p: &FeatureParams) -> Vec<Vec<Vec3>> {
    if channel >= v.channels.len() {
        return Vec::new();
    }
    let mask = threshold_volume(v, channel, p.tau);
    let comps = fiber_components(&mask);
    crate::par::map(&comps, |c| chains(v, &skeletonize(c), p.min_path_len))
        .into_iter()
        .flatten()
        .collect()
}

/// Runs the whole extraction: paths from all channels, normals from the
/// surface channel, and winding links between surface paths.
pub fn extract_features(v: &Volume, p: &FeatureParams) -> Result<FeatureSet> {
    p.validate()?;
    v.validate()?;
    let mut paths = Vec::new();
    let groups = [
        (PathKind::Surface, surface_paths(v, p)),
        (PathKind::FiberHorizontal, fiber_paths(v, FIBER_H_CHANNEL, p)),
        (PathKind::FiberVertical, fiber_paths(v, FIBER_V_CHANNEL, p)),
    ];
    for (kind, group) in groups {
        for points in group {
            paths.push(Path {
                id: paths.len() as u32,
                kind,
                points,
            });
        }
    }
    let surface: Vec<&Path> = paths.iter().filter(|q| q.kind == PathKind::Surface).collect();
    let surface_owned: Vec<Path> = surface.iter().map(|q| (*q).clone()).collect();
    let mut normals = estimate_normals(v, SURFACE_CHANNEL, &surface_owned, &p.normal_params());
    let all_points: Vec<Vec3> = surface.iter().flat_map(|q| q.points.iter().copied()).collect();
    if !all_points.is_empty() {
        let centroid = all_points.iter().sum::<Vec3>() / all_points.len() as f64;
        orient_outward(&mut normals, &centroid);
    }
    let voxel = (v.spacing[0] + v.spacing[1] + v.spacing[2]) / 3.0;
    let adjacency = winding_adjacency(
        &surface,
        &normals,
        &AdjacencyParams {
            max_ray: p.max_ray_factor * p.prior_spacing,
            hit_tol: p.hit_tol * voxel,
            min_ray: p.min_ray_factor * p.prior_spacing,
        },
    );
    if let Some(s) = adjacency.spacing {
        log::info!("estimated winding spacing {s:.3}");
    }
    let e = v.extent();
    Ok(FeatureSet {
        paths,
        normals,
        links: adjacency.links,
        bounds: Some(Bounds {
            min: [0.0; 3],
            max: [e.x, e.y, e.z],
        }),
    })
}
