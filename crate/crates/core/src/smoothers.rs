//! One- and two-dimensional kernel smoothers consumed by backfitting:
//! `m̃_j`, `Ψ̂_j`, `Ψ̂_jk` and the pilot densities `p̂_j`, all on a grid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridMatrixFunction, GridVectorFunction};
use crate::kernel::{check_bandwidth, BaseKernel, BoundaryKernel};

/// Largest condition number accepted for `Ψ̂_j(x)`.
pub const PSI_CONDITION_LIMIT: f64 = 1e12;

/// How the boundary kernel `K_h(·, v)` is normalised to integrate to one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Divide by the grid Simpson sum of `K((x_g - v)/h)`, so that the
    /// discrete integral over the grid is exactly one.
    #[default]
    Quadrature,
    /// Divide by the closed-form `∫₀¹ K((w - v)/h) dw`.
    Analytic,
}

/// `(1, t, …, t^order)` with `t = (u - x)/h`.
pub fn design_vector(x: f64, u: f64, h: f64, order: usize) -> Vec<f64> {
    let t = (u - x) / h;
    let mut out = Vec::with_capacity(order + 1);
    let mut p = 1.0;
    for _ in 0..=order {
        out.push(p);
        p *= t;
    }
    out
}

/// Nonzero stretch of `x_g ↦ w(x_g, u) K_h(x_g, u)` for one observation `u`.
/// `values[l * q + a]` is entry `a` of the design vector at node `first + l`.
#[derive(Debug, Clone, Default)]
pub(crate) struct KernelWindow {
    pub first: usize,
    pub len: usize,
    pub values: Vec<f64>,
}

pub(crate) fn kernel_window(
    kernel: &BoundaryKernel,
    grid: Grid,
    u: f64,
    order: usize,
    normalization: Normalization,
) -> Result<KernelWindow> {
    let h = kernel.bandwidth();
    let base = kernel.base();
    let last = (grid.len() - 1) as f64;
    let lo = ((u - h) * last).floor().max(0.0) as usize;
    let hi = ((u + h) * last).ceil().min(last) as usize;

    let raw: Vec<f64> = (lo..=hi).map(|g| base.eval((grid.node(g) - u) / h)).collect();
    let start = raw.iter().position(|k| *k > 0.0);
    let end = raw.iter().rposition(|k| *k > 0.0);
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) => (s, e),
        _ => {
            return Err(Error::Config(format!(
                "bandwidth {h} is too small for a grid of {} nodes",
                grid.len()
            )))
        }
    };
    let first = lo + start;
    let kernel_values = &raw[start..=end];
    let scale = match normalization {
        Normalization::Quadrature => kernel_values
            .iter()
            .enumerate()
            .map(|(l, k)| grid.weight(first + l) * k)
            .sum::<f64>(),
        Normalization::Analytic => kernel.normalizer(u),
    };

    let q = order + 1;
    let len = kernel_values.len();
    let mut values = Vec::with_capacity(len * q);
    for (l, k) in kernel_values.iter().enumerate() {
        let kw = k / scale;
        let t = (u - grid.node(first + l)) / h;
        let mut p = kw;
        for _ in 0..q {
            values.push(p);
            p *= t;
        }
    }
    Ok(KernelWindow { first, len, values })
}

pub(crate) fn component_windows(
    x: &[f64],
    kernel: &BoundaryKernel,
    grid: Grid,
    order: usize,
    normalization: Normalization,
) -> Result<Vec<KernelWindow>> {
    x.iter()
        .map(|&u| kernel_window(kernel, grid, u, order, normalization))
        .collect()
}

/// `p̂_j(x) = n⁻¹ Σᵢ K_h(x, X_jⁱ)` on the grid.
pub fn pilot_density(
    data: &Dataset,
    j: usize,
    h: f64,
    kernel: BaseKernel,
    grid: Grid,
) -> Result<GridFunction> {
    if j >= data.d() {
        return Err(Error::Config(format!("component {j} out of range")));
    }
    let k = BoundaryKernel::new(kernel, h)?;
    let windows = component_windows(data.x(j), &k, grid, 0, Normalization::default())?;
    Ok(density_from_windows(&windows, grid, 0))
}

fn density_from_windows(windows: &[KernelWindow], grid: Grid, order: usize) -> GridFunction {
    let q = order + 1;
    let n = windows.len() as f64;
    let mut values = vec![0.0; grid.len()];
    for w in windows {
        for l in 0..w.len {
            values[w.first + l] += w.values[l * q] / n;
        }
    }
    GridFunction::from_vec_unchecked(grid, values)
}

/// Per-node local moments `n⁻¹Σ w wᵀ K Z²` and `n⁻¹Σ w K Z r`.
pub(crate) fn local_moments(
    windows: &[KernelWindow],
    z: &[f64],
    response: &[f64],
    grid: Grid,
    order: usize,
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let q = order + 1;
    let n = windows.len() as f64;
    let mut psi = vec![DMatrix::<f64>::zeros(q, q); grid.len()];
    let mut rhs = vec![DVector::<f64>::zeros(q); grid.len()];
    for (i, w) in windows.iter().enumerate() {
        let zz = z[i] * z[i] / n;
        let zy = z[i] * response[i] / n;
        for l in 0..w.len {
            let wk = &w.values[l * q..(l + 1) * q];
            // w wᵀ K = (w K)(w K)ᵀ / K, so use the leading entry K.
            let k = wk[0];
            if k == 0.0 {
                continue;
            }
            let g = w.first + l;
            let p = &mut psi[g];
            for b in 0..q {
                let t = wk[b] / k * zz;
                for a in 0..=b {
                    let v = wk[a] * t;
                    p[(a, b)] += v;
                    if a != b {
                        p[(b, a)] += v;
                    }
                }
            }
            for a in 0..q {
                rhs[g][a] += wk[a] * zy;
            }
        }
    }
    (psi, rhs)
}

/// Checks `Ψ̂` at one node and returns its inverse.
pub(crate) fn invert_psi(component: usize, x: f64, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(psi.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= PSI_CONDITION_LIMIT) {
        return Err(Error::SingularPsi {
            component,
            x,
            condition,
        });
    }
    if let Some(ch) = psi.clone().cholesky() {
        return Ok(ch.inverse());
    }
    psi.clone().try_inverse().ok_or(Error::SingularPsi {
        component,
        x,
        condition,
    })
}

/// Solves the local systems `Ψ̂(x_g) m = rhs(x_g)` at every node.
pub(crate) fn solve_local(
    component: usize,
    psi: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
    density: &GridFunction,
    grid: Grid,
    order: usize,
) -> Result<(GridVectorFunction, Vec<DMatrix<f64>>)> {
    let q = order + 1;
    let mut out = GridVectorFunction::zeros(grid, q);
    let mut inverses = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let x = grid.node(g);
        if density.values()[g] <= 0.0 {
            return Err(Error::EmptyWindow { component, x });
        }
        let inv = invert_psi(component, x, &psi[g])?;
        let sol = &inv * &rhs[g];
        out.at_mut(g).copy_from_slice(sol.as_slice());
        inverses.push(inv);
    }
    Ok((out, inverses))
}

/// Every kernel quantity of one backfitting problem.
#[derive(Debug, Clone)]
pub struct SmootherSet {
    order: usize,
    kernel: BaseKernel,
    grid: Grid,
    h: Vec<f64>,
    tilde_m: Vec<GridVectorFunction>,
    psi: Vec<Vec<DMatrix<f64>>>,
    psi_inv: Vec<Vec<DMatrix<f64>>>,
    psi_pair: Vec<Vec<Option<GridMatrixFunction>>>,
    p_hat: Vec<GridFunction>,
}

impl SmootherSet {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.order + 1
    }

    pub fn d(&self) -> usize {
        self.h.len()
    }

    pub fn kernel(&self) -> BaseKernel {
        self.kernel
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.h
    }

    /// `m̃_j` on the grid.
    pub fn tilde_m(&self, j: usize) -> &GridVectorFunction {
        &self.tilde_m[j]
    }

    /// `Ψ̂_j(x_g)`; for order zero this is the `1×1` matrix `q̂_j(x_g)`.
    pub fn psi(&self, j: usize, g: usize) -> &DMatrix<f64> {
        &self.psi[j][g]
    }

    pub fn psi_inverse(&self, j: usize, g: usize) -> &DMatrix<f64> {
        &self.psi_inv[j][g]
    }

    /// `Ψ̂_jk` for `j ≠ k`.
    pub fn psi_pair(&self, j: usize, k: usize) -> &GridMatrixFunction {
        assert_ne!(j, k, "Ψ̂_jj is not a pair smoother");
        self.psi_pair[j][k].as_ref().expect("pair smoother present")
    }

    pub fn p_hat(&self, j: usize) -> &GridFunction {
        &self.p_hat[j]
    }
}

pub fn build_smoothers(
    data: &Dataset,
    h: &[f64],
    kernel: BaseKernel,
    order: usize,
    grid: Grid,
) -> Result<SmootherSet> {
    build_smoothers_with(data, h, kernel, order, grid, Normalization::default())
}

pub fn build_smoothers_with(
    data: &Dataset,
    h: &[f64],
    kernel: BaseKernel,
    order: usize,
    grid: Grid,
    normalization: Normalization,
) -> Result<SmootherSet> {
    let d = data.d();
    if h.len() != d {
        return Err(Error::Config(format!(
            "{} bandwidths supplied for {d} components",
            h.len()
        )));
    }
    for &hj in h {
        check_bandwidth(hj)?;
    }
    data.check_order(order)?;
    let q = order + 1;
    let n = data.n() as f64;

    let windows: Vec<Vec<KernelWindow>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let k = BoundaryKernel::new(kernel, h[j])?;
            component_windows(data.x(j), &k, grid, order, normalization)
        })
        .collect::<Result<_>>()?;

    let univariate: Vec<_> = (0..d)
        .into_par_iter()
        .map(|j| {
            let p_hat = density_from_windows(&windows[j], grid, order);
            let (psi, rhs) = local_moments(&windows[j], data.z(j), data.y(), grid, order);
            let (tilde_m, psi_inv) = solve_local(j, &psi, &rhs, &p_hat, grid, order)?;
            Ok((p_hat, psi, psi_inv, tilde_m))
        })
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| ((j + 1)..d).map(move |k| (j, k)))
        .collect();
    let surfaces: Vec<GridMatrixFunction> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let mut out = GridMatrixFunction::zeros(grid, q);
            let m = out.matrix_mut();
            let (zj, zk) = (data.z(j), data.z(k));
            for i in 0..data.n() {
                let s = zj[i] * zk[i] / n;
                if s == 0.0 {
                    continue;
                }
                let (wa, wb) = (&windows[j][i], &windows[k][i]);
                let rows = wa.first * q..(wa.first + wa.len) * q;
                for lb in 0..wb.len {
                    for b in 0..q {
                        let vb = wb.values[lb * q + b] * s;
                        if vb == 0.0 {
                            continue;
                        }
                        let mut col = m.column_mut((wb.first + lb) * q + b);
                        let col = &mut col.as_mut_slice()[rows.clone()];
                        for (c, a) in col.iter_mut().zip(&wa.values) {
                            *c += vb * a;
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut psi_pair: Vec<Vec<Option<GridMatrixFunction>>> = vec![vec![None; d]; d];
    for (&(j, k), surface) in pairs.iter().zip(surfaces) {
        psi_pair[k][j] = Some(surface.swapped());
        psi_pair[j][k] = Some(surface);
    }

    let mut p_hat = Vec::with_capacity(d);
    let mut psi = Vec::with_capacity(d);
    let mut psi_inv = Vec::with_capacity(d);
    let mut tilde_m = Vec::with_capacity(d);
    for (p, s, si, m) in univariate {
        p_hat.push(p);
        psi.push(s);
        psi_inv.push(si);
        tilde_m.push(m);
    }

    Ok(SmootherSet {
        order,
        kernel,
        grid,
        h: h.to_vec(),
        tilde_m,
        psi,
        psi_inv,
        psi_pair,
        p_hat,
    })
}

/// Local polynomial fit of `response` on `Z_j w_j` with weights `K_{h_j}`,
/// i.e. `m̃_j` with `Y` replaced by `response`.
pub fn local_polynomial_fit(
    data: &Dataset,
    j: usize,
    response: &[f64],
    h: f64,
    kernel: BaseKernel,
    order: usize,
    grid: Grid,
) -> Result<GridVectorFunction> {
    if j >= data.d() {
        return Err(Error::Config(format!("component {j} out of range")));
    }
    if response.len() != data.n() {
        return Err(Error::Data("response length does not match the sample".into()));
    }
    let k = BoundaryKernel::new(kernel, h)?;
    let windows = component_windows(data.x(j), &k, grid, order, Normalization::default())?;
    let density = density_from_windows(&windows, grid, order);
    let (psi, rhs) = local_moments(&windows, data.z(j), response, grid, order);
    let (fit, _) = solve_local(j, &psi, &rhs, &density, grid, order)?;
    Ok(fit)
}
