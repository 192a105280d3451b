//! Deterministic geometry toolkit for category-level 9DoF pose estimation.
//!
//! The crate covers the non-learned stack of a residual bounding-box
//! projection pipeline:
//!
//! - [`geometry`]: pose types, the Umeyama similarity solver, rotation
//!   calibration and NOCS transforms.
//! - [`bbox`]: displacement fields from points to bounding-box faces, their
//!   NOCS form, prior-driven hypotheses, residual fields and a pose decoder.
//! - [`shape_prior`]: deformation, assignment and canonical-box math for
//!   category mean shapes.
//! - [`augment`]: non-linear shape augmentation (parabolic axis scaling and
//!   laptop hinge articulation), the linear baseline and input perturbations.
//! - [`losses`]: Laplacian-uncertainty residual losses, the pose/field
//!   consistency term and the weighted total, with analytic gradients.
//! - [`metrics`]: oriented-box 3D IoU, symmetry-aware rotation error,
//!   threshold metrics and precision sweeps.
//! - [`synth`]: parametric shape generators, depth back-projection and
//!   seeded synthetic instances.
//! - [`pipeline`]: end-to-end encode/decode/evaluate runs over a synthetic
//!   corpus with deterministic reports.
//!
//! Everything is a pure function of its inputs; randomness is always routed
//! through a caller-provided seed.

pub mod augment;
pub mod bbox;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod shape_prior;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{Category, NocsCoord, OrientedBox, Pose9D, RotationEstimate, SymmetryKind, SymmetryTag};
