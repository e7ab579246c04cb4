//! Billiard dynamics in convex polytopes.
//!
//! The crate covers the full pipeline from a half-space description of a
//! billiard table to periodic tube atlases and the quantitative estimates
//! built on them:
//!
//! - [`geometry`]: polytope construction, skeleton distances, rationality.
//! - [`flow`]: reflection law, tracing with singular stopping, symbol words,
//!   corridor unfoldings.
//! - [`tubes`]: periodic orbit solver, cross-sections, tube enumeration,
//!   boundary recurrence and the return-map Lipschitz check.
//! - [`rotations`]: classification of orthogonal maps, the orbit-density
//!   count `N(R, eps, r)` and admissibility sets.
//! - [`estimates`]: angle bound for intersecting tubes, phase-space volumes,
//!   tube-length sums.
//! - [`almostperiodic`]: almost periods, Bohr means, Parseval defects.
//! - [`spectral`]: box eigenfunction mass near the skeleton, hemisphere
//!   modes, mapping-torus spectra and discrete observability constants.
//! - [`io`] and [`scenario`]: file formats and the scenario runner used by
//!   the `polytube` binary.

// NaN-aware comparisons are written as negated orderings on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod almostperiodic;
pub mod estimates;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod quadrature;
pub mod rotations;
pub mod scenario;
pub mod spectral;
pub mod tol;
pub mod tubes;

pub use geometry::{ConvexPolytope, Halfspace};
pub use tol::Tolerance;
