//! Smooth backfitting for varying-coefficient regression
//! `Y = Σ_j m_j(X_j) Z_j + σ(X, Z) ε` with local polynomial fitting,
//! a marginal-integration baseline, plug-in bandwidths and a Monte Carlo
//! harness.

pub mod backfit;
pub mod bandwidth;
pub mod data;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod marginal;
pub mod simulate;
pub mod smoothers;

pub use backfit::{
    backfit_local_constant, backfit_local_polynomial, oracle_component_fit, solve_direct_lc,
    solve_direct_lp, BackfitConfig, Init, LcFitResult, LpFitResult,
};
pub use bandwidth::{fit_plugins, optimal_bandwidths, BandwidthResult, PluginEstimates};
pub use data::Dataset;
pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, GridMatrixFunction, GridVectorFunction};
pub use kernel::{BaseKernel, BoundaryKernel, KernelMoments};
pub use marginal::{mi_estimate, MiConfig};
pub use smoothers::{build_smoothers, design_vector, pilot_density, SmootherSet};
