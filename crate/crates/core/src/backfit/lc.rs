//! Local-constant smooth backfitting with scalar `q̂_j`, `q̂_jk`.

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{dense_solve, BackfitConfig, Init};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::smoothers::SmootherSet;

#[derive(Debug, Clone, PartialEq)]
pub struct LcFitResult {
    pub m_hat: Vec<GridFunction>,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    pub history: Vec<f64>,
    /// Last sweep change measured in the `p̂_j`-weighted norm.
    pub weighted_delta: f64,
}

/// `T_jk(g, h) = q̂_jk(x_g, x_h) w_h / q̂_j(x_g)` with Simpson weights `w_h`.
fn transfer(s: &SmootherSet, j: usize, k: usize) -> DMatrix<f64> {
    let grid = s.grid();
    let size = grid.len();
    let pair = s.psi_pair(j, k).matrix();
    DMatrix::from_fn(size, size, |g, h| {
        pair[(g, h)] * grid.weight(h) / s.psi(j, g)[(0, 0)]
    })
}

fn check_order(s: &SmootherSet) -> Result<()> {
    if s.order() != 0 {
        return Err(Error::Config(format!(
            "local-constant backfitting needs order-0 smoothers, got order {}",
            s.order()
        )));
    }
    Ok(())
}

fn tilde_levels(s: &SmootherSet) -> Vec<DVector<f64>> {
    (0..s.d())
        .map(|j| DVector::from_column_slice(s.tilde_m(j).as_slice()))
        .collect()
}

fn to_functions(grid: Grid, m: Vec<DVector<f64>>) -> Vec<GridFunction> {
    m.into_iter()
        .map(|v| GridFunction::from_vec_unchecked(grid, v.as_slice().to_vec()))
        .collect()
}

pub fn backfit_local_constant(s: &SmootherSet, cfg: &BackfitConfig) -> Result<LcFitResult> {
    check_order(s)?;
    cfg.validate()?;
    let d = s.d();
    let grid = s.grid();
    let tilde = tilde_levels(s);
    let t: Vec<Vec<Option<DMatrix<f64>>>> = (0..d)
        .map(|j| (0..d).map(|k| (j != k).then(|| transfer(s, j, k))).collect())
        .collect();

    let mut m: Vec<DVector<f64>> = match &cfg.init {
        Init::TildeM => tilde.clone(),
        Init::Zeros => vec![DVector::zeros(grid.len()); d],
        Init::User(fs) => {
            if fs.len() != d || fs.iter().any(|f| f.grid() != grid) {
                return Err(Error::Config("initial estimates do not match the smoothers".into()));
            }
            fs.iter()
                .map(|f| DVector::from_column_slice(f.level().values()))
                .collect()
        }
    };

    let mut history = Vec::new();
    for sweep in 1..=cfg.max_iter {
        let mut sq = 0.0;
        let mut wsq = 0.0;
        for j in 0..d {
            let mut next = tilde[j].clone();
            for k in (0..d).filter(|&k| k != j) {
                next.gemv(-1.0, t[j][k].as_ref().unwrap(), &m[k], 1.0);
            }
            let diff: Vec<f64> = next.iter().zip(m[j].iter()).map(|(a, b)| (a - b) * (a - b)).collect();
            sq += grid.integrate_values(&diff);
            let wdiff: Vec<f64> = diff.iter().zip(s.p_hat(j).values()).map(|(a, p)| a * p).collect();
            wsq += grid.integrate_values(&wdiff);
            m[j] = next;
        }
        let delta = sq.sqrt();
        history.push(delta);
        debug!("local-constant sweep {sweep}: delta {delta:e}");
        if delta <= cfg.tol {
            return Ok(LcFitResult {
                m_hat: to_functions(grid, m),
                iterations: sweep,
                final_delta: delta,
                converged: true,
                history,
                weighted_delta: wsq.sqrt(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        final_delta: *history.last().unwrap(),
        history,
    })
}

/// Dense solve of the discretised local-constant backfitting equations.
pub fn solve_direct_lc(s: &SmootherSet) -> Result<Vec<GridFunction>> {
    check_order(s)?;
    let d = s.d();
    let grid = s.grid();
    let size = grid.len();
    let mut a = DMatrix::<f64>::identity(d * size, d * size);
    for j in 0..d {
        for k in (0..d).filter(|&k| k != j) {
            a.view_mut((j * size, k * size), (size, size))
                .copy_from(&transfer(s, j, k));
        }
    }
    let b = DVector::from_iterator(d * size, tilde_levels(s).into_iter().flat_map(|v| v.as_slice().to_vec()));
    let sol = dense_solve(a, &b, d)?;
    let parts = (0..d)
        .map(|j| sol.rows(j * size, size).into_owned())
        .collect();
    Ok(to_functions(grid, parts))
}

/// `Σ_j max_g |m_j − (m̃_j − Σ_{k≠j} ∫ m_k q̂_jk / q̂_j)|`.
pub fn lc_residual(s: &SmootherSet, m: &[GridFunction]) -> Result<f64> {
    check_order(s)?;
    let d = s.d();
    let tilde = tilde_levels(s);
    let mv: Vec<DVector<f64>> = m.iter().map(|f| DVector::from_column_slice(f.values())).collect();
    let mut total = 0.0;
    for j in 0..d {
        let mut r = tilde[j].clone();
        for k in (0..d).filter(|&k| k != j) {
            r.gemv(-1.0, &transfer(s, j, k), &mv[k], 1.0);
        }
        total += (r - &mv[j]).amax();
    }
    Ok(total)
}
