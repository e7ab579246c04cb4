//! Convex polytopes in H-representation with derived vertices, facets and
//! the singular skeleton (faces of dimension at most `n - 2`).

mod polytope;
mod rationality;
pub mod shapes;

pub use polytope::{ConvexPolytope, Facet, Halfspace, SkeletonFace, SkeletonNeighborhood};
pub use rationality::{classify_rationality, Rationality, ReflectionGroup};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polytope is unbounded: recession direction {0:?}")]
    UnboundedPolytope(Vec<f64>),
    #[error("polytope has empty interior")]
    DegeneratePolytope,
    #[error("halfspace {index} has normal of length {norm}, expected 1")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("polytopes need dimension >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("point lies outside the polytope (violation {violation})")]
    PointOutside { violation: f64 },
    #[error("non-finite input")]
    NonFinite,
    #[error("operation unsupported in dimension {0}")]
    UnsupportedDimension(usize),
}
