//! Uniform grids on `[0, 1]` and functions represented by their node values.
//!
//! Every integral over `[0, 1]` in the estimators is a composite Simpson sum
//! over the grid, which is why grids have an odd number of nodes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 101;
pub const MIN_GRID_SIZE: usize = 21;

/// `G` equally spaced nodes `x_g = g / (G - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    size: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            size: DEFAULT_GRID_SIZE,
        }
    }
}

impl Grid {
    pub fn new(size: usize) -> Result<Self> {
        if size < MIN_GRID_SIZE || size % 2 == 0 {
            return Err(Error::Config(format!(
                "grid size must be odd and at least {MIN_GRID_SIZE}, got {size}"
            )));
        }
        Ok(Grid { size })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / (self.size - 1) as f64
    }

    #[inline]
    pub fn node(&self, g: usize) -> f64 {
        if g + 1 == self.size {
            1.0
        } else {
            g as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.size).map(|g| self.node(g)).collect()
    }

    /// Simpson weight of node `g`.
    #[inline]
    pub fn weight(&self, g: usize) -> f64 {
        let s = self.spacing() / 3.0;
        if g == 0 || g + 1 == self.size {
            s
        } else if g % 2 == 1 {
            4.0 * s
        } else {
            2.0 * s
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.size).map(|g| self.weight(g)).collect()
    }

    /// Simpson sum of node values.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.size);
        values
            .iter()
            .enumerate()
            .map(|(g, v)| self.weight(g) * v)
            .sum()
    }

    /// Inclusive range of nodes strictly inside `(centre - radius, centre + radius)`,
    /// clipped to the grid. `None` when no node qualifies.
    pub fn nodes_within(&self, centre: f64, radius: f64) -> Option<(usize, usize)> {
        let last = (self.size - 1) as f64;
        let lo = ((centre - radius) * last).floor().max(0.0) as usize;
        let hi = (((centre + radius) * last).ceil().min(last)) as usize;
        let mut first = None;
        let mut end = 0;
        for g in lo..=hi {
            if (self.node(g) - centre).abs() < radius {
                if first.is_none() {
                    first = Some(g);
                }
                end = g;
            }
        }
        first.map(|f| (f, end))
    }
}

/// A univariate function stored at the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Data(format!(
                "expected {} grid values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite grid value {v}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|g| f(grid.node(g))).collect();
        GridFunction { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integrate(&self) -> f64 {
        integrate(self)
    }

    pub fn interpolate(&self, x: f64) -> Result<f64> {
        interpolate(self, x)
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `a·self + b·other` on the same grid.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> GridFunction {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }
}

/// `∫₀¹ f(x) dx` by composite Simpson.
pub fn integrate(f: &GridFunction) -> f64 {
    f.grid.integrate_values(&f.values)
}

/// `√∫(f − g)² w dx`.
pub fn weighted_l2_distance(f: &GridFunction, g: &GridFunction, w: &GridFunction) -> Result<f64> {
    if f.grid != g.grid || f.grid != w.grid {
        return Err(Error::Domain("functions live on different grids".into()));
    }
    if let Some(bad) = w.values.iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("negative weight {bad}")));
    }
    let sq: Vec<f64> = f
        .values
        .iter()
        .zip(&g.values)
        .zip(&w.values)
        .map(|((a, b), w)| (a - b) * (a - b) * w)
        .collect();
    Ok(f.grid.integrate_values(&sq).max(0.0).sqrt())
}

/// Piecewise linear interpolation between bracketing nodes.
pub fn interpolate(f: &GridFunction, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{x} lies outside [0, 1]")));
    }
    let last = f.grid.len() - 1;
    let pos = x * last as f64;
    let left = (pos.floor() as usize).min(last - 1);
    let t = pos - left as f64;
    Ok((1.0 - t) * f.values[left] + t * f.values[left + 1])
}

/// A `(π+1)`-vector of functions; row `g` holds the vector at node `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridVectorFunction {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
}

impl GridVectorFunction {
    pub fn zeros(grid: Grid, dim: usize) -> Self {
        GridVectorFunction {
            grid,
            dim,
            values: vec![0.0; grid.len() * dim],
        }
    }

    pub fn new(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != grid.len() * dim {
            return Err(Error::Data(format!(
                "expected {}x{} grid values, got {}",
                grid.len(),
                dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite grid value".into()));
        }
        Ok(GridVectorFunction { grid, dim, values })
    }

    /// Level-only vector function (higher entries zero).
    pub fn from_level(level: &GridFunction, dim: usize) -> Self {
        let mut out = GridVectorFunction::zeros(level.grid, dim);
        for (g, v) in level.values.iter().enumerate() {
            out.values[g * dim] = *v;
        }
        out
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn at(&self, g: usize) -> &[f64] {
        &self.values[g * self.dim..(g + 1) * self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, g: usize) -> &mut [f64] {
        &mut self.values[g * self.dim..(g + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn component(&self, k: usize) -> GridFunction {
        assert!(k < self.dim);
        let values = (0..self.grid.len())
            .map(|g| self.values[g * self.dim + k])
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }

    pub fn level(&self) -> GridFunction {
        self.component(0)
    }

    /// `∫ |f(x) − g(x)|² dx` with the Euclidean norm on the vector entries.
    pub fn squared_distance(&self, other: &GridVectorFunction) -> f64 {
        let vals: Vec<f64> = (0..self.grid.len())
            .map(|g| {
                self.at(g)
                    .iter()
                    .zip(other.at(g))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            })
            .collect();
        self.grid.integrate_values(&vals)
    }

    pub fn sup_distance(&self, other: &GridVectorFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A `(π+1)×(π+1)` matrix-valued function of two grid arguments, stored as
/// one dense `(Gq)×(Gq)` matrix whose `(g, h)` block is the value at
/// `(x_g, x_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMatrixFunction {
    grid: Grid,
    dim: usize,
    values: DMatrix<f64>,
}

impl GridMatrixFunction {
    pub fn zeros(grid: Grid, dim: usize) -> Self {
        let n = grid.len() * dim;
        GridMatrixFunction {
            grid,
            dim,
            values: DMatrix::zeros(n, n),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    /// Value at `(x_g, x_h)`.
    pub fn block(&self, g: usize, h: usize) -> DMatrix<f64> {
        let q = self.dim;
        self.values.view((g * q, h * q), (q, q)).into_owned()
    }

    /// The function `(x_k, x_j) ↦ F(x_j, x_k)ᵀ`.
    pub fn swapped(&self) -> GridMatrixFunction {
        GridMatrixFunction {
            grid: self.grid,
            dim: self.dim,
            values: self.values.transpose(),
        }
    }
}
