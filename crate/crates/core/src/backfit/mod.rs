//! Smooth backfitting: Gauss–Seidel sweeps of the backfitting integral
//! equations, dense direct solves used as an oracle, and the oracle
//! component fit that knows every other coefficient function.

mod lc;
mod lp;

pub use lc::{backfit_local_constant, lc_residual, solve_direct_lc, LcFitResult};
pub use lp::{
    backfit_local_polynomial, init_agreement, lp_residual, oracle_component_fit,
    solve_direct_lp, LpFitResult,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::GridVectorFunction;

pub const DEFAULT_TOL: f64 = 1e-11;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Starting values of the sweeps.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Init {
    /// The marginal fits `m̃_j`.
    #[default]
    TildeM,
    Zeros,
    /// One function per component; for local-constant fits only the level
    /// entry is used.
    User(Vec<GridVectorFunction>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackfitConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl Default for BackfitConfig {
    fn default() -> Self {
        BackfitConfig {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: Init::TildeM,
        }
    }
}

impl BackfitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Singular-value ratio below which the stacked system counts as singular.
pub const CONCURVITY_RATIO: f64 = 1e-12;

/// Solves the stacked backfitting system `A m = b` whose unknowns are
/// `d` equally sized component blocks.
pub(crate) fn dense_solve(a: DMatrix<f64>, b: &DVector<f64>, d: usize) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let pivots = lu.u().diagonal();
    let max = pivots.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = pivots.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min > 1e-10 * max) {
        let svd = a.svd(false, true);
        let s = &svd.singular_values;
        let (imin, smin) = s
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
        let smax = s.iter().fold(0.0f64, |m, v| m.max(*v));
        if smin <= CONCURVITY_RATIO * smax {
            let v_t = svd.v_t.expect("right singular vectors requested");
            let null = v_t.row(imin);
            let block = null.len() / d;
            let null_direction = (0..d)
                .map(|j| null.columns(j * block, block).norm())
                .collect();
            return Err(Error::Concurvity { null_direction });
        }
    }
    lu.solve(b).ok_or(Error::Concurvity {
        null_direction: vec![f64::NAN; d],
    })
}
