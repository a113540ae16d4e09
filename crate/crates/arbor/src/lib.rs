//! Signed rooted trees, arboreal hypersurfaces, model Weinstein fields and the
//! cusp resolution local model.

pub mod classifier;
pub mod cusp;
pub mod geom;
pub mod hypersurface;
pub mod trees;
pub mod weinstein;
