//! Goal-driven retrieval of diffusion initial noise.
//!
//! A [`library::NoiseLibrary`] stores seeded Gaussian noise tensors keyed by
//! features of the image each noise produces with an empty prompt. Queries
//! score every record against a staged goal and return the best noise.

pub mod cli;
pub mod ddim;
pub mod error;
pub mod features;
pub mod image;
pub mod library;
pub mod query;
pub mod schedule;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
