//! Photometric stereo toolkit core.
//!
//! Everything algorithmic lives here: a small reverse-mode autodiff engine
//! over dense tensors, an analytic scene renderer for normal-map/BRDF/light
//! combinations, the classic per-pixel least-squares normal solver, two
//! convolutional estimators (surface normals from multi-light image stacks,
//! and per-image lighting direction/intensity), training loops, and the
//! evaluation metrics.
//!
//! The crate is `no_std`-compatible (with `alloc`); file formats, dataset
//! directories, and the command line live in the companion CLI crate. All
//! randomness is seeded explicitly and every loop is single-threaded, so
//! results are reproducible bit-for-bit across runs.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod classic;
pub mod error;
pub mod grid;
pub mod lcnet;
pub mod metrics;
pub mod optim;
pub mod psfcn;
pub mod render;
pub mod rng;
pub mod tensor;
pub mod train;
mod vec3;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
