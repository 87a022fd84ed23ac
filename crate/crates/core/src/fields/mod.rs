//! Scalar and phase-space fields, phantoms, absorption and scattering kernels.

mod grid;
pub mod io;
mod kernel;
mod phantom;

pub use grid::{direction_angle, validate_n_theta, Grid2, PhaseField, ScalarField};
pub(crate) use grid::dot;
pub use kernel::{eval_kernel, FourierMode, KernelMode, KernelSpec, ScatterKernel};
pub use phantom::{
    area_fraction, extension_profile, make_phantom, make_sigma, Bump, Extension, PhantomSpec, SigmaSpec,
};
