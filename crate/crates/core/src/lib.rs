//! Forward and inverse source problems for the stationary radiative
//! transfer equation `θ·∇u + σu − Ku = f` on a disc in the plane.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fields;
pub mod geometry;
pub mod inversion;
pub mod measurement;
pub mod transport;

pub use error::{Error, Result};
pub use fields::{Grid2, PhaseField, ScalarField, ScatterKernel};
pub use geometry::{BoundaryGrid, BoundarySample, Circle, DiscDomain, MeasureSurface, Ray, Vec2};
pub use measurement::{BoundarySinogram, MeasurementOperator};
pub use transport::{TransportConfig, TransportOperator};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
