//! Sparse observations extracted from probability volumes: paths along
//! surfaces and fibers, surface normals, and relative winding links.

pub mod adjacency;
pub mod graph;
pub mod mask;
pub mod normals;
pub mod pipeline;
pub mod thin;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathKind {
    #[serde(rename = "surface")]
    Surface,
    #[serde(rename = "fiber_h")]
    FiberHorizontal,
    #[serde(rename = "fiber_v")]
    FiberVertical,
}

/// Ordered, non-branching sequence of scan-space points on one winding.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub id: u32,
    pub kind: PathKind,
    pub points: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalSample {
    pub position: Vec3,
    pub normal: Vec3,
}

/// `to` lies `offset` windings outward of `from`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindingLink {
    pub from: u32,
    pub to: u32,
    pub offset: i32,
    /// (point on `from`, ray hit on `to`)
    pub point_pairs: Vec<(Vec3, Vec3)>,
    pub votes: u32,
}

/// Axis-aligned box in scan space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn center(&self) -> Vec3 {
        Vec3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Option<Bounds> {
        let mut it = pts.into_iter();
        let first = it.next()?;
        let mut b = Bounds {
            min: [first.x, first.y, first.z],
            max: [first.x, first.y, first.z],
        };
        for p in it {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        Some(b)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Everything the fitter consumes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub paths: Vec<Path>,
    pub normals: Vec<NormalSample>,
    pub links: Vec<WindingLink>,
    /// Scan volume bounds, when known.
    pub bounds: Option<Bounds>,
}

impl FeatureSet {
    pub fn surface_paths(&self) -> impl Iterator<Item = &Path> {
        self.paths.iter().filter(|p| p.kind == PathKind::Surface)
    }

    /// Bounds of the volume if recorded, otherwise of all observed points.
    pub fn effective_bounds(&self) -> Option<Bounds> {
        self.bounds.or_else(|| {
            Bounds::of_points(
                self.paths
                    .iter()
                    .flat_map(|p| p.points.iter())
                    .chain(self.normals.iter().map(|n| &n.position)),
            )
        })
    }
}
