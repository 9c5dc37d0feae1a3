//! Heat kernel of the fractional Laplacian perturbed by a Hardy potential.

pub mod constants;
pub mod mc;
pub mod error;
pub mod experiments;
pub mod hardy_kernel;
pub mod numerics;
pub mod selfsimilar;
pub mod special;
pub mod stable;

pub use error::{Error, Result};
