//! Marginal integration baseline: a full-dimensional local polynomial fit
//! averaged over the observed covariates in the nuisance directions.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::bandwidth::MAX_BANDWIDTH;
use crate::kernel::{check_bandwidth, BaseKernel, BoundaryKernel};
use crate::smoothers::{component_windows, Normalization};

pub const DEFAULT_KERNEL_BUDGET: f64 = 2e9;
/// Condition estimate above which a local system is declared singular.
pub const MI_CONDITION_LIMIT: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct MiConfig {
    /// Primary bandwidths, one per component.
    pub h: Vec<f64>,
    /// `c` in `b_k = c (log n)⁻¹ h_j`.
    pub c_secondary: f64,
    /// Bandwidths `h_j` entering `b_k`; `None` means the primary ones.
    pub secondary_reference: Option<Vec<f64>>,
    /// Diagonal ridge; `None` means `n⁻²`.
    pub ridge: Option<f64>,
    pub order: usize,
    /// Warn when `n · G · n` exceeds this.
    pub kernel_budget: f64,
}

impl MiConfig {
    pub fn new(h: Vec<f64>, c_secondary: f64, order: usize) -> Self {
        MiConfig {
            h,
            c_secondary,
            secondary_reference: None,
            ridge: None,
            order,
            kernel_budget: DEFAULT_KERNEL_BUDGET,
        }
    }

    pub fn ridge_for(&self, n: usize) -> f64 {
        self.ridge.unwrap_or(1.0 / (n as f64 * n as f64))
    }

    /// Secondary bandwidth used in every nuisance direction when estimating
    /// component `j`, capped at 1/2.
    pub fn secondary_bandwidth(&self, j: usize, n: usize) -> f64 {
        let reference = self.secondary_reference.as_ref().unwrap_or(&self.h)[j];
        (self.c_secondary * reference / (n as f64).ln()).min(MAX_BANDWIDTH)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    pub curve: GridFunction,
    /// Secondary bandwidth actually used.
    pub secondary_bandwidth: f64,
    /// Evaluation points `(x_g, X_{-j}^l)` with no observation carrying
    /// positive weight; their local solve returns zero.
    pub empty_points: usize,
}

/// `m̂_j^{mi}` on the grid.
pub fn mi_estimate(
    data: &Dataset,
    j: usize,
    cfg: &MiConfig,
    kernel: BaseKernel,
    grid: Grid,
) -> Result<GridFunction> {
    mi_estimate_detailed(data, j, cfg, kernel, grid).map(|e| e.curve)
}

/// Nuisance neighbours of one averaging point: observation index, product
/// kernel weight and the stacked nuisance design entries `w_k Z_k`.
struct Neighbours {
    index: Vec<usize>,
    weight: Vec<f64>,
    design: Vec<f64>,
}

pub fn mi_estimate_detailed(
    data: &Dataset,
    j: usize,
    cfg: &MiConfig,
    kernel: BaseKernel,
    grid: Grid,
) -> Result<MiEstimate> {
    let n = data.n();
    let d = data.d();
    if j >= d {
        return Err(Error::Config(format!("component {j} out of range")));
    }
    if cfg.h.len() != d {
        return Err(Error::Config(format!("{} bandwidths for {d} components", cfg.h.len())));
    }
    if cfg.secondary_reference.as_ref().is_some_and(|r| r.len() != d) {
        return Err(Error::Config("secondary reference bandwidths do not match d".into()));
    }
    if !(cfg.c_secondary > 0.0) {
        return Err(Error::Config("secondary bandwidth multiplier must be positive".into()));
    }
    let ridge = cfg.ridge_for(n);
    if !(ridge >= 0.0) {
        return Err(Error::Config("ridge must be non-negative".into()));
    }
    if n < (cfg.order + 1) * d + 1 {
        return Err(Error::Data(format!("n = {n} is too small for marginal integration")));
    }
    check_bandwidth(cfg.h[j])?;
    let cost = n as f64 * grid.len() as f64 * n as f64;
    if cost > cfg.kernel_budget {
        warn!("marginal integration needs about {cost:e} kernel evaluations");
    }

    let q = cfg.order + 1;
    let dim = d * q;
    let b = cfg.secondary_bandwidth(j, n);
    let primary = BoundaryKernel::new(kernel, cfg.h[j])?;
    let windows = component_windows(data.x(j), &primary, grid, cfg.order, Normalization::default())?;
    let nuisance: Vec<usize> = (0..d).filter(|&k| k != j).collect();
    let secondary = BoundaryKernel::new(kernel, b)?;

    let neighbours: Vec<Neighbours> = (0..n)
        .into_par_iter()
        .map(|l| {
            let mut nb = Neighbours {
                index: Vec::new(),
                weight: Vec::new(),
                design: Vec::new(),
            };
            for i in 0..n {
                let mut w = 1.0;
                for &k in &nuisance {
                    w *= secondary.eval(data.x(k)[l], data.x(k)[i]);
                    if w == 0.0 {
                        break;
                    }
                }
                if w == 0.0 {
                    continue;
                }
                nb.index.push(i);
                nb.weight.push(w);
                for &k in &nuisance {
                    let t = (data.x(k)[i] - data.x(k)[l]) / b;
                    let mut p = data.z(k)[i];
                    for _ in 0..q {
                        nb.design.push(p);
                        p *= t;
                    }
                }
            }
            nb
        })
        .collect();

    // Position of each nuisance block inside the full design vector.
    let offsets: Vec<usize> = nuisance.iter().map(|&k| k * q).collect();
    let nf = n as f64;

    let per_node: Vec<Result<(f64, usize)>> = (0..grid.len())
        .into_par_iter()
        .map(|g| {
            let mut total = 0.0;
            let mut empty = 0;
            let mut v = vec![0.0; dim];
            for (l, nb) in neighbours.iter().enumerate() {
                let mut m = DMatrix::<f64>::zeros(dim, dim);
                let mut rhs = DVector::<f64>::zeros(dim);
                let mut any = false;
                for (pos, &i) in nb.index.iter().enumerate() {
                    let win = &windows[i];
                    if g < win.first || g >= win.first + win.len {
                        continue;
                    }
                    let pw = &win.values[(g - win.first) * q..(g - win.first + 1) * q];
                    let k = pw[0];
                    if k == 0.0 {
                        continue;
                    }
                    any = true;
                    let weight = k * nb.weight[pos] / nf;
                    let zj = data.z(j)[i];
                    for a in 0..q {
                        v[j * q + a] = pw[a] / k * zj;
                    }
                    let nd = &nb.design[pos * nuisance.len() * q..(pos + 1) * nuisance.len() * q];
                    for (slot, &off) in offsets.iter().enumerate() {
                        v[off..off + q].copy_from_slice(&nd[slot * q..(slot + 1) * q]);
                    }
                    let y = data.y()[i];
                    for c in 0..dim {
                        let wc = weight * v[c];
                        rhs[c] += wc * y;
                        for r in 0..dim {
                            m[(r, c)] += wc * v[r];
                        }
                    }
                }
                if !any {
                    empty += 1;
                    continue;
                }
                for r in 0..dim {
                    m[(r, r)] += ridge;
                }
                let point = || {
                    let mut p: Vec<f64> = (0..d).map(|k| data.x(k)[l]).collect();
                    p[j] = grid.node(g);
                    p
                };
                let chol = m.cholesky().ok_or_else(|| Error::MiSingular {
                    component: j,
                    point: point(),
                })?;
                let diag = chol.l_dirty().diagonal();
                let max = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let min = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
                if !((max / min).powi(2) <= MI_CONDITION_LIMIT) {
                    return Err(Error::MiSingular {
                        component: j,
                        point: point(),
                    });
                }
                let theta = chol.solve(&rhs);
                total += theta[j * q];
            }
            Ok((total / nf, empty))
        })
        .collect();

    let mut values = Vec::with_capacity(grid.len());
    let mut empty_points = 0;
    for r in per_node {
        let (v, e) = r?;
        values.push(v);
        empty_points += e;
    }
    Ok(MiEstimate {
        curve: GridFunction::new(grid, values)?,
        secondary_bandwidth: b,
        empty_points,
    })
}
