#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vcsbf::{BaseKernel, Dataset, Grid, SmootherSet};

/// A random backfitting problem small enough for the dense solver.
pub struct Instance {
    pub data: Dataset,
    pub h: Vec<f64>,
    pub grid: Grid,
}

impl Instance {
    pub fn smoothers(&self, order: usize) -> SmootherSet {
        vcsbf::build_smoothers(&self.data, &self.h, BaseKernel::Epanechnikov, order, self.grid)
            .expect("random instance is well posed")
    }
}

/// `d ≤ 3`, `G ≤ 51`, `n ≤ 200`; the first `Z` column is constant.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=3);
    let grid = Grid::new(2 * rng.gen_range(10..=25) + 1).unwrap();
    let n = rng.gen_range(120..=200);
    let h: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..0.45)).collect();
    let mut x = vec![Vec::with_capacity(n); d];
    let mut z = vec![Vec::with_capacity(n); d];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut yi = 0.0;
        for j in 0..d {
            let xv: f64 = rng.gen();
            let zv: f64 = if j == 0 { 1.0 } else { rng.sample(StandardNormal) };
            yi += (1.0 + j as f64 * xv).sin() * zv;
            x[j].push(xv);
            z[j].push(zv);
        }
        let e: f64 = rng.sample(StandardNormal);
        y.push(yi + 0.3 * e);
    }
    Instance {
        data: Dataset::new(x, z, y).unwrap(),
        h,
        grid,
    }
}

/// Noiseless single-component data `y = p(x) z`.
pub fn polynomial_data(coef: &[f64], n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xv: f64 = rng.gen();
        let zv: f64 = 1.0 + rng.gen::<f64>();
        let p: f64 = coef.iter().rev().fold(0.0, |acc, c| acc * xv + c);
        x.push(xv);
        z.push(zv);
        y.push(p * zv);
    }
    Dataset::new(vec![x], vec![z], y).unwrap()
}

/// `k`-th derivative of `Σ c_l x^l`.
pub fn poly_derivative(coef: &[f64], k: usize, x: f64) -> f64 {
    coef.iter()
        .enumerate()
        .skip(k)
        .map(|(l, c)| {
            let falling: f64 = (l - k + 1..=l).map(|v| v as f64).product();
            c * falling * x.powi((l - k) as i32)
        })
        .sum()
}
