//! Spectral regularizers built from Huber-type potentials, their quadratic
//! majorizers, and locally low-rank reconstruction of dynamic image series.

pub mod error;
pub mod linalg;
pub mod linesearch;
pub mod llr;
pub mod model;
pub mod potentials;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::CMatrix;
pub use potentials::{Potential, PotentialKind};
pub use spectral::{Curvature, SpectralRegularizer};
