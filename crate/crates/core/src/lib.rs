//! Steady-state shallow water solver: well-balanced finite volumes with
//! hydrostatic reconstruction, a regularized Newton outer iteration and a
//! geometric multigrid inner solver with block symmetric Gauss-Seidel
//! smoothing, plus spectral analysis of the smoother.

pub mod analysis;
pub mod assembly;
pub mod driver;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod physics;
pub mod problems;

pub use error::{Error, Result};
