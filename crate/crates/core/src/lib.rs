//! Learning determinantal point process kernels from observed subsets.

pub mod datasets;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod learning;
pub mod cli;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
pub use kernel::{LKernel, SpectralKernel, Subset};
pub use numerics::{EigenPair, SymmetricMatrix};
pub use rng::RngStream;
