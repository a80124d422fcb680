//! Single-view 3D scaffold construction and latent radiance field completion.
//!
//! The pipeline turns one RGB image plus a relative depth map into a partial
//! mesh (the *in-boundary scaffold*), pre-renders it over a frontal box of
//! camera angles, and then optimizes a voxel latent field so that it matches
//! the scaffold where the scaffold is reliable and follows an inpainting
//! guidance signal everywhere else.
//!
//! Module map:
//!
//! * [`geometry`]: unprojection, outlier removal, normals, Poisson
//!   reconstruction, density trimming, PLY export.
//! * [`prerender`]: camera poses, z-buffer rasterizer, latent codec, view bank.
//! * [`viewsampler`]: progressive beta-distributed pose sampling and the two
//!   alternative samplers.
//! * [`latentfield`]: dense voxel latent field with analytic gradients.
//! * [`trainer`]: losses, refinement schedule, optimizer and the full run.
//! * [`guidance`]: guidance trait, synthetic oracle and the HTTP client.

pub mod geometry;
pub mod guidance;
pub mod latentfield;
pub mod prerender;
pub mod tensor;
pub mod trainer;
pub mod viewsampler;

pub use tensor::{Mask, Tensor3};

/// 3-vector used for positions, directions and normals.
pub type Vec3 = nalgebra::Vector3<f64>;
