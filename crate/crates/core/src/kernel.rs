//! Base kernels, the boundary-corrected kernel on `[0, 1]`, and the kernel
//! moment constants used by local polynomial fitting and bandwidth selection.
//!
//! The boundary-corrected kernel is
//!
//! ```text
//! K_g(u, v) = K((u - v) / g) / ∫₀¹ K((w - v) / g) dw,   u, v ∈ [0, 1]
//! ```
//!
//! so that `∫₀¹ K_g(u, v) du = 1` for every centre `v`. For polynomial kernels
//! with a closed-form CDF the normalizer is `g · [F((1 - v)/g) - F(-v/g)]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes used for moments of kernels without closed forms.
const MOMENT_QUADRATURE_NODES: usize = 20_001;

/// Symmetric probability densities supported on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BaseKernel {
    /// `(3/4)(1 - u²)`.
    #[default]
    Epanechnikov,
    /// `1/2`.
    Uniform,
    /// `(15/16)(1 - u²)²`, evaluated through quadrature.
    Biweight,
    /// `1 - |u|`, evaluated through quadrature.
    Triangular,
}

impl BaseKernel {
    pub const ALL: [BaseKernel; 4] = [
        BaseKernel::Epanechnikov,
        BaseKernel::Uniform,
        BaseKernel::Biweight,
        BaseKernel::Triangular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseKernel::Epanechnikov => "epanechnikov",
            BaseKernel::Uniform => "uniform",
            BaseKernel::Biweight => "biweight",
            BaseKernel::Triangular => "triangular",
        }
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        match self {
            BaseKernel::Epanechnikov => 0.75 * (1.0 - u * u),
            BaseKernel::Uniform => 0.5,
            BaseKernel::Biweight => {
                let s = 1.0 - u * u;
                0.9375 * s * s
            }
            BaseKernel::Triangular => 1.0 - u.abs(),
        }
    }

    /// `F(t) = ∫₋₁ᵗ K(s) ds`.
    pub fn cdf(self, t: f64) -> f64 {
        if t <= -1.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        match self {
            BaseKernel::Epanechnikov => 0.5 + 0.75 * t - 0.25 * t * t * t,
            BaseKernel::Uniform => 0.5 * (t + 1.0),
            BaseKernel::Biweight => 0.5 + 0.9375 * (t - 2.0 * t.powi(3) / 3.0 + 0.2 * t.powi(5)),
            BaseKernel::Triangular if t <= 0.0 => 0.5 * (1.0 + t) * (1.0 + t),
            BaseKernel::Triangular => 1.0 - 0.5 * (1.0 - t) * (1.0 - t),
        }
    }

    /// `μ_ℓ(K) = ∫ u^ℓ K(u) du`.
    pub fn moment(self, l: usize) -> f64 {
        if l % 2 == 1 {
            return 0.0;
        }
        let lf = l as f64;
        match self {
            BaseKernel::Epanechnikov => 3.0 / ((lf + 1.0) * (lf + 3.0)),
            BaseKernel::Uniform => 1.0 / (lf + 1.0),
            _ => symmetric_quadrature(|u| u.powi(l as i32) * self.eval(u)),
        }
    }

    /// `μ_ℓ(K²) = ∫ u^ℓ K(u)² du`.
    pub fn squared_moment(self, l: usize) -> f64 {
        if l % 2 == 1 {
            return 0.0;
        }
        let lf = l as f64;
        match self {
            BaseKernel::Epanechnikov => {
                1.125 * (1.0 / (lf + 1.0) - 2.0 / (lf + 3.0) + 1.0 / (lf + 5.0))
            }
            BaseKernel::Uniform => 0.5 / (lf + 1.0),
            _ => symmetric_quadrature(|u| {
                let k = self.eval(u);
                u.powi(l as i32) * k * k
            }),
        }
    }

    /// `∫ K(u)² du`.
    pub fn roughness(self) -> f64 {
        self.squared_moment(0)
    }
}

impl fmt::Display for BaseKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaseKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaseKernel::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown kernel `{s}`")))
    }
}

/// Rejects bandwidths outside `(0, 1/2]`.
pub fn check_bandwidth(g: f64) -> Result<()> {
    if g.is_finite() && g > 0.0 && g <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth { value: g })
    }
}

/// A base kernel renormalized to integrate to one over `[0, 1]` in its first
/// argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryKernel {
    base: BaseKernel,
    g: f64,
}

impl BoundaryKernel {
    pub fn new(base: BaseKernel, g: f64) -> Result<Self> {
        check_bandwidth(g)?;
        Ok(BoundaryKernel { base, g })
    }

    pub fn base(&self) -> BaseKernel {
        self.base
    }

    pub fn bandwidth(&self) -> f64 {
        self.g
    }

    /// `∫₀¹ K((w - v)/g) dw`.
    #[inline]
    pub fn normalizer(&self, v: f64) -> f64 {
        let g = self.g;
        g * (self.base.cdf((1.0 - v) / g) - self.base.cdf(-v / g))
    }

    /// `K_g(u, v)`; zero whenever `u` or `v` leaves `[0, 1]`.
    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return 0.0;
        }
        let k = self.base.eval((u - v) / self.g);
        if k == 0.0 {
            0.0
        } else {
            k / self.normalizer(v)
        }
    }
}

/// Free-function form of [`BoundaryKernel::eval`] with bandwidth validation.
pub fn eval_boundary_kernel(base: BaseKernel, g: f64, u: f64, v: f64) -> Result<f64> {
    Ok(BoundaryKernel::new(base, g)?.eval(u, v))
}

/// Moment vectors and matrices of a base kernel for local polynomial order `π`.
///
/// Matrix indices run from `(0, 0)` to `(π, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMoments {
    pub order: usize,
    /// `μ_ℓ(K)` for `ℓ = 0..=2π+1`.
    pub mu: Vec<f64>,
    /// `(μ_{ℓ+ℓ'}(K))`.
    pub n1: DMatrix<f64>,
    /// `(μ_{ℓ+ℓ'}(K²))`.
    pub n2: DMatrix<f64>,
    /// `(μ_{π+1}(K), …, μ_{2π+1}(K))`.
    pub gamma: DVector<f64>,
}

impl KernelMoments {
    pub fn new(base: BaseKernel, order: usize) -> Self {
        let q = order + 1;
        let mu: Vec<f64> = (0..=2 * order + 1).map(|l| base.moment(l)).collect();
        let n1 = DMatrix::from_fn(q, q, |a, b| mu[a + b]);
        let n2 = DMatrix::from_fn(q, q, |a, b| base.squared_moment(a + b));
        let gamma = DVector::from_fn(q, |a, _| mu[order + 1 + a]);
        KernelMoments {
            order,
            mu,
            n1,
            n2,
            gamma,
        }
    }

    pub fn n1_inverse(&self) -> DMatrix<f64> {
        self.n1
            .clone()
            .cholesky()
            .expect("moment matrix of a density on an interval is positive definite")
            .inverse()
    }

    /// `N₁⁻¹ N₂ N₁⁻¹`.
    pub fn sandwich(&self) -> DMatrix<f64> {
        let inv = self.n1_inverse();
        &inv * &self.n2 * &inv
    }

    /// `(N₁⁻¹ N₂ N₁⁻¹)₀₀`, the variance constant of the level estimate.
    pub fn variance_constant(&self) -> f64 {
        self.sandwich()[(0, 0)]
    }

    /// `(N₁⁻¹ γ)₀`, the bias constant of the level estimate.
    pub fn bias_constant(&self) -> f64 {
        (self.n1_inverse() * &self.gamma)[0]
    }
}

pub fn kernel_moments(base: BaseKernel, order: usize) -> KernelMoments {
    KernelMoments::new(base, order)
}

/// `((N₁⁻¹N₂N₁⁻¹)₀₀, (N₁⁻¹γ)₀)` for local linear fitting.
pub fn local_linear_constants(base: BaseKernel) -> (f64, f64) {
    let m = KernelMoments::new(base, 1);
    (m.variance_constant(), m.bias_constant())
}

/// Composite Simpson rule with `nodes` (odd) points on `[a, b]`.
pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    debug_assert!(nodes >= 3 && nodes % 2 == 1);
    if b <= a {
        return 0.0;
    }
    let panels = nodes - 1;
    let step = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + step * i as f64);
    }
    acc * step / 3.0
}

// Split at zero so kinks of |u|-type kernels sit on a panel boundary.
fn symmetric_quadrature(f: impl Fn(f64) -> f64 + Copy) -> f64 {
    simpson(f, -1.0, 0.0, MOMENT_QUADRATURE_NODES) + simpson(f, 0.0, 1.0, MOMENT_QUADRATURE_NODES)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_matches_quadrature() {
        for k in BaseKernel::ALL {
            assert!((k.cdf(0.0) - 0.5).abs() < 1e-15);
            for t in [-0.9f64, -0.4, 0.3, 0.75] {
                let q = simpson(|s| k.eval(s), -1.0, t.min(0.0), 2001)
                    + if t > 0.0 { simpson(|s| k.eval(s), 0.0, t, 2001) } else { 0.0 };
                assert!((k.cdf(t) - q).abs() < 1e-12, "{k} at {t}");
            }
        }
    }
    use approx::assert_abs_diff_eq;

    #[test]
    fn base_kernels_are_symmetric_densities() {
        for k in BaseKernel::ALL {
            let total = symmetric_quadrature(|u| k.eval(u));
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            for &u in &[0.0, 0.3, 0.77, 1.0, 1.5] {
                assert!(k.eval(u) >= 0.0);
                assert_eq!(k.eval(u), k.eval(-u));
            }
            assert_eq!(k.eval(1.01), 0.0);
            assert_abs_diff_eq!(k.cdf(0.0), 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn interior_boundary_kernel_value() {
        let v = eval_boundary_kernel(BaseKernel::Epanechnikov, 0.1, 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(v, 7.5, epsilon = 1e-12);
    }

    #[test]
    fn outside_unit_interval_is_zero() {
        for k in BaseKernel::ALL {
            assert_eq!(eval_boundary_kernel(k, 0.3, 1.2, 0.5).unwrap(), 0.0);
            assert_eq!(eval_boundary_kernel(k, 0.3, 0.5, -0.1).unwrap(), 0.0);
        }
    }

    #[test]
    fn edge_normalizer_is_half_mass() {
        let kern = BoundaryKernel::new(BaseKernel::Epanechnikov, 0.2).unwrap();
        // independent check of the closed-form normalizer
        let quad = simpson(|w| BaseKernel::Epanechnikov.eval(w / 0.2), 0.0, 1.0, 4001);
        assert_abs_diff_eq!(kern.normalizer(0.0), 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(quad, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(kern.eval(0.0, 0.0), 7.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_bandwidths() {
        for g in [0.0, -0.1, 0.51, f64::NAN] {
            assert!(matches!(
                BoundaryKernel::new(BaseKernel::Epanechnikov, g),
                Err(Error::InvalidBandwidth { .. })
            ));
        }
        assert!(BoundaryKernel::new(BaseKernel::Epanechnikov, 0.5).is_ok());
    }

    #[test]
    fn interior_kernel_is_scaled_base() {
        for k in BaseKernel::ALL {
            let g = 0.15;
            let kern = BoundaryKernel::new(k, g).unwrap();
            for &v in &[0.15, 0.4, 0.85] {
                for &u in &[0.1, 0.2, 0.31, 0.5, 0.9] {
                    let expect = k.eval((u - v) / g) / g;
                    assert_abs_diff_eq!(kern.eval(u, v), expect, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn epanechnikov_moments_match_exact_integrals() {
        let m0 = kernel_moments(BaseKernel::Epanechnikov, 0);
        assert_abs_diff_eq!(m0.n1[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m0.n2[(0, 0)], 0.6, epsilon = 1e-15);
        let m1 = kernel_moments(BaseKernel::Epanechnikov, 1);
        assert_abs_diff_eq!(m1.mu[2], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(m1.n1[(1, 1)], 0.2, epsilon = 1e-15);
        assert_eq!(m1.n1[(0, 1)], 0.0);
        assert_eq!(m1.gamma[1], 0.0);
        // closed forms against the quadrature fallback
        for l in 0..8 {
            let q = symmetric_quadrature(|u| u.powi(l as i32) * BaseKernel::Epanechnikov.eval(u));
            assert_abs_diff_eq!(BaseKernel::Epanechnikov.moment(l), q, epsilon = 1e-12);
            let q2 = symmetric_quadrature(|u| {
                let k = BaseKernel::Epanechnikov.eval(u);
                u.powi(l as i32) * k * k
            });
            assert_abs_diff_eq!(BaseKernel::Epanechnikov.squared_moment(l), q2, epsilon = 1e-12);
        }
    }

    #[test]
    fn local_linear_constants_for_closed_form_kernels() {
        let (v, b) = local_linear_constants(BaseKernel::Epanechnikov);
        assert_abs_diff_eq!(v, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 0.2, epsilon = 1e-12);
        let (v, b) = local_linear_constants(BaseKernel::Uniform);
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 1.0 / 3.0, epsilon = 1e-12);
        for k in BaseKernel::ALL {
            let (v, b) = local_linear_constants(k);
            assert_abs_diff_eq!(v, k.roughness(), epsilon = 1e-10);
            assert_abs_diff_eq!(b, k.moment(2), epsilon = 1e-10);
        }
    }

    #[test]
    fn moment_matrix_identities() {
        for k in BaseKernel::ALL {
            for order in 0..4 {
                let m = kernel_moments(k, order);
                let q = order + 1;
                assert_eq!(m.n1, m.n1.transpose());
                let eig = m.n1.clone().symmetric_eigen();
                assert!(eig.eigenvalues.min() > 0.0);
                let mu = DVector::from_fn(q, |l, _| m.mu[l]);
                for l in 0..q {
                    assert_eq!(m.n1[(l, 0)], m.mu[l]);
                }
                let row = mu.transpose() * m.n1_inverse();
                for l in 0..q {
                    let expect = if l == 0 { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(row[l], expect, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in BaseKernel::ALL {
            assert_eq!(k.name().parse::<BaseKernel>().unwrap(), k);
        }
        assert!("gaussian".parse::<BaseKernel>().is_err());
    }
}
