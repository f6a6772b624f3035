//! Shared numerical kernels.

pub mod conv;
pub mod grid;
pub mod laplace;
pub mod quad;
pub mod roots;
pub mod special;

pub use grid::{grid_convolve, Extrapolation, GridFunction, Interp};
pub use laplace::{laplace_invert, laplace_invert_checked, InversionConfig, InversionMethod, LaplaceTransform};
pub use quad::{integrate, integrate_to_inf, integrate_with_breaks, QuadTol};
pub use roots::{find_root_bracketed, poly_roots_complex};
