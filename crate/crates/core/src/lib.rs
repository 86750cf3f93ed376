//! Numerical laboratory for conservative interacting-diffusion dynamics on
//! the periodic torus: spectral grids, singular interaction kernels,
//! cutoff spectral noise, a semi-implicit solver for the controlled and
//! noisy equations, a-priori-estimate diagnostics, and the large-deviations
//! rate function layer.

pub mod diag;
pub mod error;
pub mod field;
pub mod grid;
pub mod kernel;
pub mod noise;
pub mod rate;
pub mod reg;
pub mod snapshot;
pub mod solver;

pub use error::{DkwError, Result};
pub use field::{periodic_convolve, ScalarField, VectorField};
pub use grid::{make_grid, TorusGrid};
pub use kernel::{kernel_power_law, kernel_smooth_fourier, kernel_zero, Kernel};
pub use noise::{build_modes, scaling_k, ModeSet, NoiseSpec};
pub use solver::{solve_controlled, solve_skeleton, solve_spde, SolverConfig, Trajectory};
