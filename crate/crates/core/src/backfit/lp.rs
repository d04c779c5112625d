//! Local polynomial smooth backfitting of arbitrary order.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use super::{dense_solve, BackfitConfig, Init};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridVectorFunction};
use crate::kernel::BaseKernel;
use crate::smoothers::{local_polynomial_fit, SmootherSet};

#[derive(Debug, Clone, PartialEq)]
pub struct LpFitResult {
    /// `(m̂_{j,0}, …, m̂_{j,π})` where `m̂_{j,k} ≈ h_j^k m_j^{(k)} / k!`.
    pub m_hat: Vec<GridVectorFunction>,
    /// `derivatives[j][k] = k! h_j^{-k} m̂_{j,k}`.
    pub derivatives: Vec<Vec<GridFunction>>,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    pub history: Vec<f64>,
    pub weighted_delta: f64,
}

impl LpFitResult {
    /// The level estimates `m̂_j`.
    pub fn levels(&self) -> Vec<GridFunction> {
        self.m_hat.iter().map(|m| m.level()).collect()
    }
}

/// `blockdiag(Ψ̂_j⁻¹) Ψ̂_jk diag(w ⊗ 1)`: maps `m̂_k` on the grid to
/// `∫ Ψ̂_j⁻¹ Ψ̂_jk m̂_k dx_k` on the grid.
fn transfer(s: &SmootherSet, j: usize, k: usize) -> DMatrix<f64> {
    let q = s.dim();
    let grid = s.grid();
    let size = grid.len() * q;
    let pair = s.psi_pair(j, k).matrix();
    let mut out = DMatrix::<f64>::zeros(size, size);
    for g in 0..grid.len() {
        let prod = s.psi_inverse(j, g) * pair.rows(g * q, q);
        out.rows_mut(g * q, q).copy_from(&prod);
    }
    for h in 0..grid.len() {
        let w = grid.weight(h);
        for b in 0..q {
            out.column_mut(h * q + b).scale_mut(w);
        }
    }
    out
}

fn transfers(s: &SmootherSet) -> Vec<Vec<Option<DMatrix<f64>>>> {
    let d = s.d();
    (0..d)
        .map(|j| (0..d).map(|k| (j != k).then(|| transfer(s, j, k))).collect())
        .collect()
}

fn tilde_vectors(s: &SmootherSet) -> Vec<DVector<f64>> {
    (0..s.d())
        .map(|j| DVector::from_column_slice(s.tilde_m(j).as_slice()))
        .collect()
}

fn node_sums(grid: Grid, q: usize, v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (r, x) in v.enumerate() {
        out[r / q] += x;
    }
    out
}

fn into_result(
    s: &SmootherSet,
    m: Vec<DVector<f64>>,
    iterations: usize,
    history: Vec<f64>,
    weighted_delta: f64,
) -> LpFitResult {
    let grid = s.grid();
    let q = s.dim();
    let m_hat: Vec<GridVectorFunction> = m
        .into_iter()
        .map(|v| GridVectorFunction::new(grid, q, v.as_slice().to_vec()).expect("finite fit"))
        .collect();
    let derivatives = derivatives(&m_hat, s.bandwidths());
    LpFitResult {
        m_hat,
        derivatives,
        iterations,
        final_delta: *history.last().unwrap_or(&0.0),
        converged: true,
        history,
        weighted_delta,
    }
}

/// `k! h_j^{-k} m̂_{j,k}` for every component and every `k ≤ π`.
pub(crate) fn derivatives(m_hat: &[GridVectorFunction], h: &[f64]) -> Vec<Vec<GridFunction>> {
    m_hat
        .iter()
        .zip(h)
        .map(|(m, &hj)| {
            let mut factor = 1.0;
            (0..m.dim())
                .map(|k| {
                    if k > 0 {
                        factor *= k as f64 / hj;
                    }
                    let c = m.component(k);
                    let vals = c.values().iter().map(|v| v * factor).collect();
                    GridFunction::from_vec_unchecked(m.grid(), vals)
                })
                .collect()
        })
        .collect()
}

pub fn backfit_local_polynomial(s: &SmootherSet, cfg: &BackfitConfig) -> Result<LpFitResult> {
    cfg.validate()?;
    if s.order() % 2 == 0 && s.order() > 0 {
        warn!(
            "local polynomial order {} is even; the asymptotic theory covers odd orders",
            s.order()
        );
    }
    let d = s.d();
    let q = s.dim();
    let grid = s.grid();
    let tilde = tilde_vectors(s);
    let t = transfers(s);

    let mut m: Vec<DVector<f64>> = match &cfg.init {
        Init::TildeM => tilde.clone(),
        Init::Zeros => vec![DVector::zeros(grid.len() * q); d],
        Init::User(fs) => {
            if fs.len() != d || fs.iter().any(|f| f.grid() != grid || f.dim() != q) {
                return Err(Error::Config("initial estimates do not match the smoothers".into()));
            }
            fs.iter().map(|f| DVector::from_column_slice(f.as_slice())).collect()
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
            let diff = node_sums(grid, q, next.iter().zip(m[j].iter()).map(|(a, b)| (a - b) * (a - b)));
            sq += grid.integrate_values(&diff);
            let wdiff: Vec<f64> = diff.iter().zip(s.p_hat(j).values()).map(|(a, p)| a * p).collect();
            wsq += grid.integrate_values(&wdiff);
            m[j] = next;
        }
        let delta = sq.sqrt();
        history.push(delta);
        debug!("local polynomial sweep {sweep}: delta {delta:e}");
        if delta <= cfg.tol {
            return Ok(into_result(s, m, sweep, history, wsq.sqrt()));
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        final_delta: *history.last().unwrap(),
        history,
    })
}

/// Dense solve of the discretised backfitting equations of any order.
pub fn solve_direct_lp(s: &SmootherSet) -> Result<Vec<GridVectorFunction>> {
    let d = s.d();
    let q = s.dim();
    let grid = s.grid();
    let size = grid.len() * q;
    let mut a = DMatrix::<f64>::identity(d * size, d * size);
    for j in 0..d {
        for k in (0..d).filter(|&k| k != j) {
            a.view_mut((j * size, k * size), (size, size))
                .copy_from(&transfer(s, j, k));
        }
    }
    let b = DVector::from_iterator(
        d * size,
        tilde_vectors(s).into_iter().flat_map(|v| v.as_slice().to_vec()),
    );
    let sol = dense_solve(a, &b, d)?;
    (0..d)
        .map(|j| GridVectorFunction::new(grid, q, sol.rows(j * size, size).as_slice().to_vec()))
        .collect()
}

/// `Σ_j max |m_j − (m̃_j − Σ_{k≠j} ∫ Ψ̂_j⁻¹ Ψ̂_jk m_k dx_k)|` over nodes and entries.
pub fn lp_residual(s: &SmootherSet, m: &[GridVectorFunction]) -> f64 {
    let d = s.d();
    let tilde = tilde_vectors(s);
    let mv: Vec<DVector<f64>> = m.iter().map(|f| DVector::from_column_slice(f.as_slice())).collect();
    (0..d)
        .map(|j| {
            let mut r = tilde[j].clone();
            for k in (0..d).filter(|&k| k != j) {
                r.gemv(-1.0, &transfer(s, j, k), &mv[k], 1.0);
            }
            (r - &mv[j]).amax()
        })
        .sum()
}

/// Sup distance between the fixed points reached from `m̃` and from zero.
/// Logs a warning when they differ by more than `1e-8`.
pub fn init_agreement(s: &SmootherSet, cfg: &BackfitConfig) -> Result<f64> {
    let from_tilde = backfit_local_polynomial(s, &BackfitConfig { init: Init::TildeM, ..cfg.clone() })?;
    let from_zero = backfit_local_polynomial(s, &BackfitConfig { init: Init::Zeros, ..cfg.clone() })?;
    let gap = from_tilde
        .m_hat
        .iter()
        .zip(&from_zero.m_hat)
        .map(|(a, b)| a.sup_distance(b))
        .fold(0.0, f64::max);
    if gap > 1e-8 {
        warn!("backfitting from m̃ and from zero reached different fixed points (gap {gap:e})");
    }
    Ok(gap)
}

/// Local polynomial fit of component `j` when every other coefficient
/// function is known: `others(k, x)` returns `m_k(x)`.
pub fn oracle_component_fit(
    data: &Dataset,
    j: usize,
    others: impl Fn(usize, f64) -> f64,
    h: f64,
    kernel: BaseKernel,
    order: usize,
    grid: Grid,
) -> Result<GridVectorFunction> {
    let residual: Vec<f64> = (0..data.n())
        .map(|i| {
            let known: f64 = (0..data.d())
                .filter(|&k| k != j)
                .map(|k| others(k, data.x(k)[i]) * data.z(k)[i])
                .sum();
            data.y()[i] - known
        })
        .collect();
    local_polynomial_fit(data, j, &residual, h, kernel, order, grid)
}
