//! Optimal bandwidth constants and the rule-of-thumb plug-ins that feed them.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{simpson, KernelMoments};

/// Singular-value ratio below which a plug-in design is rank deficient.
const RANK_TOL: f64 = 1e-10;
const PLUGIN_QUADRATURE_NODES: usize = 2001;

pub const DEFAULT_MIN_BANDWIDTH: f64 = 0.01;
pub const MAX_BANDWIDTH: f64 = 0.5;

/// Parametric pilot fits used in place of the unknowns of the optimal
/// bandwidth formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginEstimates {
    /// Cubic coefficients `α_{j,0..3}` of the global fit.
    pub alpha: Vec<[f64; 4]>,
    /// `Â_j = n⁻¹ Σᵢ (2α_{j,2} + 6α_{j,3} X_jⁱ)²`.
    pub a: Vec<f64>,
    /// `B̂_j(x) = β_{j,0} + β_{j,1} x`.
    pub beta: Vec<[f64; 2]>,
    /// `Ĉ_j(x) = γ_{j,0} + γ_{j,1} x`.
    pub gamma_c: Vec<[f64; 2]>,
}

impl PluginEstimates {
    /// Cubic-fit estimate of `m_j^{(k)}(x)`.
    pub fn derivative(&self, j: usize, k: usize, x: f64) -> f64 {
        let a = &self.alpha[j];
        match k {
            0 => a[0] + a[1] * x + a[2] * x * x + a[3] * x * x * x,
            1 => a[1] + 2.0 * a[2] * x + 3.0 * a[3] * x * x,
            2 => 2.0 * a[2] + 6.0 * a[3] * x,
            3 => 6.0 * a[3],
            _ => 0.0,
        }
    }

    pub fn b_hat(&self, j: usize, x: f64) -> f64 {
        self.beta[j][0] + self.beta[j][1] * x
    }

    pub fn c_hat(&self, j: usize, x: f64) -> f64 {
        self.gamma_c[j][0] + self.gamma_c[j][1] * x
    }
}

fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>, block: &str) -> Result<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let s = &svd.singular_values;
    let max = s.iter().fold(0.0f64, |m, v| m.max(*v));
    let min = s.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(max > 0.0) || min <= RANK_TOL * max {
        return Err(Error::PluginSingular {
            block: block.to_string(),
        });
    }
    svd.solve(y, 0.0).map_err(|_| Error::PluginSingular {
        block: block.to_string(),
    })
}

pub fn fit_plugins(data: &Dataset) -> Result<PluginEstimates> {
    let n = data.n();
    let d = data.d();
    if n <= 4 * d {
        return Err(Error::Data(format!(
            "the cubic pilot fit needs more than {} observations, got {n}",
            4 * d
        )));
    }
    let design = DMatrix::from_fn(n, 4 * d, |i, c| {
        let (j, p) = (c / 4, c % 4);
        data.x(j)[i].powi(p as i32) * data.z(j)[i]
    });
    let y = DVector::from_column_slice(data.y());
    let coef = least_squares(&design, &y, "cubic fit of Y on X_j^p Z_j")?;
    let residual = &y - &design * &coef;

    let alpha: Vec<[f64; 4]> = (0..d)
        .map(|j| [coef[4 * j], coef[4 * j + 1], coef[4 * j + 2], coef[4 * j + 3]])
        .collect();
    let a = (0..d)
        .map(|j| {
            data.x(j)
                .iter()
                .map(|x| {
                    let v = 2.0 * alpha[j][2] + 6.0 * alpha[j][3] * x;
                    v * v
                })
                .sum::<f64>()
                / n as f64
        })
        .collect();

    let mut beta = Vec::with_capacity(d);
    let mut gamma_c = Vec::with_capacity(d);
    for j in 0..d {
        let lin = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { data.x(j)[i] });
        let zz: Vec<f64> = data.z(j).iter().map(|z| z * z).collect();
        let target = DVector::from_iterator(n, (0..n).map(|i| zz[i] * residual[i] * residual[i]));
        let b = least_squares(&lin, &target, &format!("linear fit of Z_{j}^2 e^2 on X_{j}"))?;
        beta.push([b[0], b[1]]);
        if data.z_is_constant(j) {
            gamma_c.push([zz[0], 0.0]);
        } else {
            let c = least_squares(&lin, &DVector::from_vec(zz), &format!("linear fit of Z_{j}^2 on X_{j}"))?;
            gamma_c.push([c[0], c[1]]);
        }
    }
    Ok(PluginEstimates {
        alpha,
        a,
        beta,
        gamma_c,
    })
}

/// What happened to a component's bandwidth on the way out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthDiagnostic {
    /// The raw bandwidth fell below the lower limit.
    ClampedLow { component: usize, raw: f64 },
    /// The raw bandwidth exceeded 1/2.
    ClampedHigh { component: usize, raw: f64 },
    /// The bias integral vanished, so `c_opt` is infinite.
    ZeroBias { component: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    pub order: usize,
    pub c_opt: Vec<f64>,
    pub h: Vec<f64>,
    /// `∫ τ_j p_j`.
    pub tau_integral: Vec<f64>,
    /// `∫ b_j² p_j`.
    pub b_integral: Vec<f64>,
    pub diagnostics: Vec<BandwidthDiagnostic>,
}

/// `c = [∫τp / (2(π+1) ∫b²p)]^{1/(2π+3)}`; `+∞` when the bias integral is zero.
pub fn c_opt_from_integrals(tau_integral: f64, b_integral: f64, order: usize) -> f64 {
    let ratio = tau_integral / (2.0 * (order as f64 + 1.0) * b_integral);
    if b_integral <= 0.0 {
        return f64::INFINITY;
    }
    ratio.powf(1.0 / (2.0 * order as f64 + 3.0))
}

/// `h = c n^{-1/(2π+3)}`.
pub fn bandwidth_from_constant(c: f64, n: usize, order: usize) -> f64 {
    c * (n as f64).powf(-1.0 / (2.0 * order as f64 + 3.0))
}

/// Clamps to `[min_h, 1/2]`, recording any change.
pub fn clamp_bandwidth(
    component: usize,
    raw: f64,
    min_h: f64,
    diagnostics: &mut Vec<BandwidthDiagnostic>,
) -> f64 {
    if raw > MAX_BANDWIDTH {
        warn!("bandwidth {raw} for component {component} clamped to {MAX_BANDWIDTH}");
        diagnostics.push(BandwidthDiagnostic::ClampedHigh { component, raw });
        MAX_BANDWIDTH
    } else if !(raw >= min_h) {
        warn!("bandwidth {raw} for component {component} clamped to {min_h}");
        diagnostics.push(BandwidthDiagnostic::ClampedLow { component, raw });
        min_h
    } else {
        raw
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

pub fn optimal_bandwidths(
    plugins: &PluginEstimates,
    moments: &KernelMoments,
    data: &Dataset,
    order: usize,
) -> Result<BandwidthResult> {
    optimal_bandwidths_with(plugins, moments, data, order, DEFAULT_MIN_BANDWIDTH)
}

pub fn optimal_bandwidths_with(
    plugins: &PluginEstimates,
    moments: &KernelMoments,
    data: &Dataset,
    order: usize,
    min_h: f64,
) -> Result<BandwidthResult> {
    if order != 1 && order != 2 {
        return Err(Error::UnsupportedOrder { order });
    }
    if moments.order != order {
        return Err(Error::Config(format!(
            "kernel moments are for order {}, bandwidths requested for order {order}",
            moments.order
        )));
    }
    let d = data.d();
    let n = data.n();
    let var_const = moments.variance_constant();
    let bias_scale = moments.bias_constant() / factorial(order + 1);

    let mut c_opt = Vec::with_capacity(d);
    let mut h = Vec::with_capacity(d);
    let mut tau_integral = Vec::with_capacity(d);
    let mut b_integral = Vec::with_capacity(d);
    let mut diagnostics = Vec::new();
    for j in 0..d {
        let c0 = plugins.c_hat(j, 0.0);
        let c1 = plugins.c_hat(j, 1.0);
        if !(c0 > 0.0 && c1 > 0.0) {
            return Err(Error::NonPositiveSecondMoment { component: j });
        }
        let tau = var_const
            * simpson(
                |x| {
                    let c = plugins.c_hat(j, x);
                    plugins.b_hat(j, x) / (c * c)
                },
                0.0,
                1.0,
                PLUGIN_QUADRATURE_NODES,
            );
        if tau < 0.0 || tau.is_nan() {
            return Err(Error::NegativeVarianceIntegral {
                component: j,
                value: tau,
            });
        }
        let bias = bias_scale * bias_scale
            * data
                .x(j)
                .iter()
                .map(|&x| plugins.derivative(j, order + 1, x).powi(2))
                .sum::<f64>()
            / n as f64;
        let c = c_opt_from_integrals(tau, bias, order);
        if c.is_infinite() {
            warn!("bias integral for component {j} vanishes; bandwidth set to {MAX_BANDWIDTH}");
            diagnostics.push(BandwidthDiagnostic::ZeroBias { component: j });
        }
        let raw = bandwidth_from_constant(c, n, order);
        h.push(clamp_bandwidth(j, raw, min_h, &mut diagnostics));
        c_opt.push(c);
        tau_integral.push(tau);
        b_integral.push(bias);
    }
    Ok(BandwidthResult {
        order,
        c_opt,
        h,
        tau_integral,
        b_integral,
        diagnostics,
    })
}
