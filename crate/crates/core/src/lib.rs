//! Numerical laboratory for decoupling experiments on paraboloids and
//! nondegenerate curves.
//!
//! The crate is organized around the objects that the experiments measure:
//!
//! * [`geometry`]: signed paraboloids, model curves, normals, transversality
//!   volumes, Wronskians, and curvatures of hyperplane sections.
//! * [`caps`]: dyadic cap partitions of frequency neighborhoods and the exact
//!   rescaling maps for curves and paraboloids.
//! * [`sums`]: the evaluation engine: exponential sums and extension
//!   operators sampled on balls and torus cells, weights, and `L^p` quadrature.
//! * [`decoupling`]: decoupling-ratio measurement, sharp-example generators,
//!   predicted exponents, and log-log exponent fitting.
//! * [`energy`]: additive `k`-energy counting with a brute-force oracle, a
//!   hashed fast path, and the exact torus moment-integral identity.
//! * [`evolution`]: spectral Schrödinger evolution on tori and
//!   Strichartz-norm sweeps.
//! * [`numerology`]: exact rational arithmetic for every explicit constant,
//!   critical index, recursion, and threshold used by the experiments.

pub mod caps;
pub mod decoupling;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod numerology;
pub mod sums;

pub use caps::{AffineMap, Cap, CapKind, CapPartition, SurfaceRef};
pub use decoupling::{DecouplingFlavor, ExponentFit, OuterNorm, RatioMeasurement};
pub use error::{Error, Result};
pub use evolution::{ModeSet, TorusSpec};
pub use geometry::{Hyperplane, ModelCurve, SectionCounts, Signature};
pub use numerology::Rational;
pub use sums::{Atom, Backend, Field, FrequencySet, GridKind, GridSpec, Lp};
