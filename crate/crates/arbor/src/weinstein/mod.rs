//! Model Weinstein structures on R^{2n}: factor fields, tree models, the
//! thickening family, zero sets, stable manifolds and joints.

pub mod factor;
pub mod flow;
pub mod model;
pub mod profile;
pub mod zeros;

use thiserror::Error;

pub use crate::geom::hausdorff;
pub use factor::{make_factor, FactorField, FactorKind, MAX_EPSILON};
pub use flow::{
    flow_residuals, integrate, joint_detect, omega, skeleton, stable_manifold_sample, Bone, JointSample,
    SkeletonParams, SkeletonPoint, SkeletonSample, Stop,
};
pub use model::{
    build_model, liouville_residual, lyapunov_check, product_model, random_points, thicken_coefficient, thicken_family,
    LyapunovReport, StructureTag, TreePair, VectorFieldModel, ZeroFlat,
};
pub use zeros::{
    eigen_split, find_zero_components, subspace_gap, EigenSplit, ZeroComponent, ZeroPoint, ZeroScan, ZeroTol,
};

#[derive(Debug, Error)]
pub enum WeinsteinError {
    #[error("tube constant {0} outside (0, 0.2]")]
    Epsilon(f64),
    #[error("tree has {0} vertices, at most {max} supported", max = MAX_MODEL_VERTICES)]
    TooManyVertices(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Vertex bound for [`build_model`].
pub const MAX_MODEL_VERTICES: usize = 5;
