//! Controlled path-dependent evolution systems on a spectral Gelfand triple.
//!
//! The state lives in the Dirichlet-Laplacian eigenbasis on (0,1), truncated
//! at a fixed ambient dimension. Coefficients may look at the whole state
//! history and at the Wiener path so far.

pub mod approx;
pub mod calculus;
pub mod control;
pub mod error;
pub mod estimates;
pub mod noise;
pub mod path;
pub mod problem;
pub mod seed;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use path::{Path, PathView, TimeGrid};
pub use spectral::{GelfandConstants, HVector, Space, SpectralBasis};
