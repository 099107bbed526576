//! Dichotomy spectra, controllability certificates and spectrum assignment
//! by feedback for discrete time-varying linear systems `x_{n+1} = M_n x_n`
//! on finite integer horizons.

pub mod assignment;
pub mod continuous;
pub mod controllability;
pub mod error;
pub mod evolution;
pub mod io;
pub mod linalg;
pub mod spectrum;
pub mod system;

pub use error::{Error, Result};
pub use system::{Horizon, MatrixSequence};
