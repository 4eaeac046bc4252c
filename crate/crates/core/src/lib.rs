//! Implicit surface reconstruction from oriented point clouds via kernel
//! ridge regression with the Matern kernel family, plus numerical tooling
//! for spectra, eigenvalue decay and bandwidth analysis.

pub mod analysis;
pub mod error;
pub mod fastmath;
pub mod geom;
pub mod cloud;
pub mod io;
pub mod field;
pub mod kdtree;
pub mod kernel;
mod mc_tables;
pub mod metrics;
pub mod mesher;
pub mod solver;
pub mod spatial;
pub mod synthetic;

pub use error::{ReconError, Result};
