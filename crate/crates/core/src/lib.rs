//! Core algorithms for assembling textured 3D scenes from per-instance
//! geometry and for baking multi-view imagery into texture atlases.
//!
//! The crate is `no_std`-compatible (requires `alloc`); every algorithm is
//! pure in-memory compute. File formats, process orchestration, and the CLI
//! live in the companion `diorama-cli` crate.
//!
//! Pipeline overview:
//! 1. [`extract`]: depth maps + masks -> per-instance point clouds and
//!    background planes.
//! 2. [`layout`]: similarity-pose optimization of each instance mesh against
//!    its cloud via the [`chamfer`] losses, then scene assembly.
//! 3. [`render`]: deterministic software rasterization into G-buffers and
//!    geometric conditioning maps.
//! 4. [`propagate`]: cross-view color propagation against an external (or
//!    built-in oracle) image generator.
//! 5. [`bake`]: confidence-weighted fusion of the propagated views into a
//!    UV texture atlas.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

mod error;

pub mod bake;
pub mod chamfer;
pub mod extract;
pub mod geom;
pub mod image;
pub mod layout;
pub mod propagate;
pub mod render;

pub use error::Error;
