pub mod data;
pub mod decoder;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod linalg;
pub mod losses;
pub mod rng;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
