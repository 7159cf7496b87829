//! Numeric core for color-invariance experiments on colorized MNIST-style data.
//!
//! The crate is `no_std` (with `alloc`) and carries no I/O: dense tensors and
//! their kernels, layers with explicit forward/backward passes, the small VGG-style
//! classifier and its training loop, deterministic dataset colorization, and the
//! evaluation statistics. File formats and the command line live in the `chroma`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod datagen;
mod error;
pub mod layers;
mod math;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Shape4, Tensor};
