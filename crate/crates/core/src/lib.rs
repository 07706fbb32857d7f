//! Model-based virtual unrolling of rolled scrolls.
//!
//! A rolled sheet is modelled as an extruded Archimedean spiral in a
//! canonical space, mapped into the scan volume by a diffeomorphism built
//! from a per-slice affine stage, an integrated stationary flow field and an
//! inter-winding gap remap. The transform is fitted by gradient descent to
//! sparse observations (surface and fiber paths, normals, relative winding
//! links) and the fitted spiral is then meshed and flattened.

pub mod error;
pub mod features;
pub mod fit;
pub mod geometry;
pub mod grad;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod mesh;
pub mod objective;
pub mod par;
pub mod phantom;
pub mod transform;
pub mod trimesh;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{CanonicalPoint, SpiralParams, Vec3, Winding};
