//! Data-generating processes of the simulation study.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::kernel::simpson;

const NORMAL_NODES: usize = 401;
const NORMAL_RANGE: f64 = 9.0;
const CURVE_NODES: usize = 4001;

/// Correlation of `(Z_2, Z_3)`.
pub const Z_CORRELATION: f64 = 0.5;

/// Coefficient functions with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueFunction {
    /// `1 + exp(2x - 1)`
    OnePlusExp,
    /// `cos(2πx)`
    Cos2Pi,
    /// `x²`
    Square,
    /// `a + b x`
    Linear { a: f64, b: f64 },
}

impl TrueFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    /// `m^{(k)}(x)`.
    pub fn derivative(&self, k: usize, x: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            TrueFunction::OnePlusExp => {
                let e = (2.0 * x - 1.0).exp() * 2f64.powi(k as i32);
                if k == 0 {
                    1.0 + e
                } else {
                    e
                }
            }
            TrueFunction::Cos2Pi => {
                let w = 2.0 * PI;
                let phase = (2.0 * PI * x) + k as f64 * PI / 2.0;
                w.powi(k as i32) * phase.cos()
            }
            TrueFunction::Square => match k {
                0 => x * x,
                1 => 2.0 * x,
                2 => 2.0,
                _ => 0.0,
            },
            TrueFunction::Linear { a, b } => match k {
                0 => a + b * x,
                1 => b,
                _ => 0.0,
            },
        }
    }

    /// `∫₀¹ (m^{(k)})² dx`.
    pub fn derivative_energy(&self, k: usize) -> f64 {
        simpson(|x| self.derivative(k, x).powi(2), 0.0, 1.0, CURVE_NODES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `σ(x, z) = 1/2 + (z₂² + z₃²)/(1 + z₂² + z₃²) · exp(−2 + (x₁ + x₂)/2)`.
    #[default]
    Heteroscedastic,
    /// `σ ≡ 0`.
    Zero,
}

/// Covariate law: `X ~ U(0,1)^d`, `Z_1 ≡ 1`, `(Z_2, Z_3)` standard
/// bivariate normal with correlation 1/2, further `Z_j` iid standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: String,
    pub functions: Vec<TrueFunction>,
    pub noise: NoiseModel,
}

impl DgpSpec {
    /// `d = 3`: `m_1 = 1 + e^{2x−1}`, `m_2 = cos 2πx`, `m_3 = x²`.
    pub fn three_component() -> Self {
        DgpSpec {
            name: "d3".into(),
            functions: vec![TrueFunction::OnePlusExp, TrueFunction::Cos2Pi, TrueFunction::Square],
            noise: NoiseModel::Heteroscedastic,
        }
    }

    /// `d = 10`: the three-component design plus seven `x²` components.
    pub fn ten_component() -> Self {
        let mut functions = vec![TrueFunction::OnePlusExp, TrueFunction::Cos2Pi, TrueFunction::Square];
        functions.extend(std::iter::repeat(TrueFunction::Square).take(7));
        DgpSpec {
            name: "d10".into(),
            functions,
            noise: NoiseModel::Heteroscedastic,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "d3" => Some(DgpSpec::three_component()),
            "d10" => Some(DgpSpec::ten_component()),
            _ => None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn d(&self) -> usize {
        self.functions.len()
    }

    pub fn sigma(&self, x: &[f64], z: &[f64]) -> f64 {
        match self.noise {
            NoiseModel::Zero => 0.0,
            NoiseModel::Heteroscedastic => {
                let s = z.get(1).map_or(0.0, |v| v * v) + z.get(2).map_or(0.0, |v| v * v);
                let x2 = x.get(1).copied().unwrap_or(0.0);
                0.5 + s / (1.0 + s) * (-2.0 + (x[0] + x2) / 2.0).exp()
            }
        }
    }

    /// Sample of size `n` from the stream `(seed, 0)`.
    pub fn generate(&self, n: usize, seed: u64) -> Dataset {
        self.generate_replication(n, seed, 0)
    }

    /// Sample of size `n` from the independent stream `(seed, replication)`.
    pub fn generate_replication(&self, n: usize, seed: u64, replication: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replication);
        let d = self.d();
        let mut x = vec![Vec::with_capacity(n); d];
        let mut z = vec![Vec::with_capacity(n); d];
        let mut y = Vec::with_capacity(n);
        let rho = Z_CORRELATION;
        let mut xi = vec![0.0; d];
        let mut zi = vec![0.0; d];
        for _ in 0..n {
            for v in xi.iter_mut() {
                *v = rng.gen::<f64>();
            }
            zi[0] = 1.0;
            if d > 1 {
                let e1: f64 = rng.sample(StandardNormal);
                zi[1] = e1;
                if d > 2 {
                    let e2: f64 = rng.sample(StandardNormal);
                    zi[2] = rho * e1 + (1.0 - rho * rho).sqrt() * e2;
                }
            }
            for v in zi.iter_mut().skip(3) {
                *v = rng.sample(StandardNormal);
            }
            let eps: f64 = rng.sample(StandardNormal);
            let mean: f64 = (0..d).map(|j| self.functions[j].eval(xi[j]) * zi[j]).sum();
            y.push(mean + self.sigma(&xi, &zi) * eps);
            for j in 0..d {
                x[j].push(xi[j]);
                z[j].push(zi[j]);
            }
        }
        Dataset::new(x, z, y).expect("generated sample is valid")
    }

    /// `E[Z_j² σ²(X, Z) | X_j = x]`.
    pub fn conditional_noise_moment(&self, j: usize, x: f64) -> f64 {
        self.noise_moment_curve(j)(x)
    }

    /// `x ↦ E[Z_j² σ²(X, Z) | X_j = x]`, with the normal expectations
    /// computed once.
    pub fn noise_moment_curve(&self, j: usize) -> impl Fn(f64) -> f64 {
        assert!(self.d() >= 3, "the noise model needs at least three components");
        let zero = self.noise == NoiseModel::Zero;
        // σ² = 1/4 + r e + r² e² with r = s/(1 + s), s = z₂² + z₃²,
        // e = exp(−2 + (x₁ + x₂)/2).
        let weight = move |a: f64, b: f64| match j {
            1 => a * a,
            2 => b * b,
            _ => 1.0,
        };
        let ratio = |a: f64, b: f64| {
            let s = a * a + b * b;
            s / (1.0 + s)
        };
        let w = normal_pair_expectation(weight);
        let wr = normal_pair_expectation(|a, b| weight(a, b) * ratio(a, b));
        let wr2 = normal_pair_expectation(|a, b| weight(a, b) * ratio(a, b).powi(2));
        // E[e^{u/2}] and E[e^u] for u ~ U(0, 1).
        let half = 2.0 * (0.5f64.exp() - 1.0);
        let full = 1.0f64.exp() - 1.0;
        let base = (-2.0f64).exp();
        move |x: f64| {
            if zero {
                return 0.0;
            }
            let (e1, e2) = if j <= 1 {
                ((x / 2.0).exp() * half, x.exp() * full)
            } else {
                (half * half, full * full)
            };
            0.25 * w + wr * base * e1 + wr2 * base * base * e2
        }
    }
}

fn normal_pdf(a: f64) -> f64 {
    (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E f(Z₂, Z₃)` for the correlated normal pair, written through
/// independent normals `(e₁, e₂)`.
fn normal_pair_expectation(f: impl Fn(f64, f64) -> f64) -> f64 {
    let rho = Z_CORRELATION;
    let s = (1.0 - rho * rho).sqrt();
    simpson(
        |e1| {
            normal_pdf(e1)
                * simpson(
                    |e2| normal_pdf(e2) * f(e1, rho * e1 + s * e2),
                    -NORMAL_RANGE,
                    NORMAL_RANGE,
                    NORMAL_NODES,
                )
        },
        -NORMAL_RANGE,
        NORMAL_RANGE,
        NORMAL_NODES,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derivatives_match_finite_differences() {
        let step = 1e-5;
        for f in [TrueFunction::OnePlusExp, TrueFunction::Cos2Pi, TrueFunction::Square] {
            for k in 0..3 {
                for &x in &[0.1, 0.37, 0.8] {
                    let fd = (f.derivative(k, x + step) - f.derivative(k, x - step)) / (2.0 * step);
                    assert_relative_eq!(fd, f.derivative(k + 1, x), max_relative = 1e-6, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn curvature_energies() {
        use std::f64::consts::{E, PI};
        assert_relative_eq!(TrueFunction::Cos2Pi.derivative_energy(2), 8.0 * PI.powi(4), max_relative = 1e-10);
        assert_relative_eq!(TrueFunction::Square.derivative_energy(2), 4.0, max_relative = 1e-12);
        assert_relative_eq!(
            TrueFunction::OnePlusExp.derivative_energy(2),
            4.0 * (E * E - 1.0 / (E * E)),
            max_relative = 1e-10
        );
    }

    #[test]
    fn zero_noise_hook_is_exact() {
        let spec = DgpSpec::three_component().with_noise(NoiseModel::Zero);
        let data = spec.generate(200, 5);
        for i in 0..200 {
            let mean: f64 = (0..3).map(|j| spec.functions[j].eval(data.x(j)[i]) * data.z(j)[i]).sum();
            assert_eq!(data.y()[i], mean);
        }
    }

    #[test]
    fn generator_is_deterministic_per_stream() {
        let spec = DgpSpec::ten_component();
        let a = spec.generate_replication(50, 9, 3);
        let b = spec.generate_replication(50, 9, 3);
        let c = spec.generate_replication(50, 9, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn correlated_normals_have_target_correlation() {
        let data = DgpSpec::three_component().generate(100_000, 77);
        let (z2, z3) = (data.z(1), data.z(2));
        let n = z2.len() as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let (m2, m3) = (mean(z2), mean(z3));
        let cov: f64 = z2.iter().zip(z3).map(|(a, b)| (a - m2) * (b - m3)).sum::<f64>() / n;
        let v2: f64 = z2.iter().map(|a| (a - m2).powi(2)).sum::<f64>() / n;
        let v3: f64 = z3.iter().map(|b| (b - m3).powi(2)).sum::<f64>() / n;
        let rho = cov / (v2 * v3).sqrt();
        assert!((rho - 0.5).abs() < 0.02, "correlation {rho}");
        assert!(data.z(0).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn conditional_noise_moment_matches_monte_carlo() {
        let spec = DgpSpec::three_component();
        let data = spec.generate(400_000, 3);
        // Average of Z_j² σ² over observations with X_j near 0.5.
        for j in 0..3 {
            let curve = spec.noise_moment_curve(j);
            let mut acc = 0.0;
            let mut count = 0.0;
            for i in 0..data.n() {
                if (data.x(j)[i] - 0.5).abs() < 0.01 {
                    let x: Vec<f64> = (0..3).map(|k| data.x(k)[i]).collect();
                    let z: Vec<f64> = (0..3).map(|k| data.z(k)[i]).collect();
                    acc += z[j] * z[j] * spec.sigma(&x, &z).powi(2);
                    count += 1.0;
                }
            }
            let mc = acc / count;
            let exact = curve(0.5);
            assert!((mc - exact).abs() < 0.03 * exact, "component {j}: {mc} vs {exact}");
        }
    }
}
