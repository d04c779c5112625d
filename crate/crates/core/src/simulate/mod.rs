//! Monte Carlo studies: replicate a data-generating process, fit a list of
//! estimators and decompose their integrated squared errors.

mod dgp;

pub use dgp::{DgpSpec, NoiseModel, TrueFunction, Z_CORRELATION};

use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backfit::{backfit_local_polynomial, oracle_component_fit, BackfitConfig};
use crate::bandwidth::{
    bandwidth_from_constant, c_opt_from_integrals, clamp_bandwidth, fit_plugins,
    optimal_bandwidths, DEFAULT_MIN_BANDWIDTH,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::kernel::{simpson, BaseKernel, KernelMoments};
use crate::marginal::{mi_estimate, MiConfig};
use crate::smoothers::build_smoothers;

const ORACLE_QUADRATURE_NODES: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    /// Smooth backfitting.
    Sbf,
    /// Marginal integration with secondary multiplier `c`.
    Mi { c: f64 },
    /// Returns the true functions; every error is zero.
    TrueFunctions,
    /// Component-wise fit that knows all other coefficient functions.
    OracleComponent,
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::Sbf => "SBF".into(),
            Estimator::Mi { c } => format!("MI(c={c})"),
            Estimator::TrueFunctions => "truth".into(),
            Estimator::OracleComponent => "oracle".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthPolicy {
    /// The optimal constants evaluated with the known design.
    Oracle,
    /// Rule-of-thumb plug-ins estimated from each replication.
    PlugIn,
    Fixed { h: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub grid: Grid,
    pub kernel: BaseKernel,
    pub order: usize,
    pub backfit: BackfitConfig,
    pub seed: u64,
    pub bandwidth: BandwidthPolicy,
    /// Marginal integration uses `h_j = mi_scale · h_j^{mi}`, while its
    /// secondary bandwidths keep using `h_j^{mi}`.
    pub mi_scale: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            grid: Grid::default(),
            kernel: BaseKernel::Epanechnikov,
            order: 1,
            backfit: BackfitConfig::default(),
            seed: 20_110_101,
            bandwidth: BandwidthPolicy::Oracle,
            mi_scale: 1.0,
        }
    }
}

/// `∫ τ_j p_j` and `∫ b_j² p_j` for the known design, where `p_j ≡ 1` and
/// `E(Z_j² | X_j) ≡ 1`.
pub fn oracle_integrals(spec: &DgpSpec, kernel: BaseKernel, order: usize) -> Vec<(f64, f64)> {
    let moments = KernelMoments::new(kernel, order);
    let var_const = moments.variance_constant();
    let fact: f64 = (1..=order + 1).map(|v| v as f64).product();
    let bias_scale = moments.bias_constant() / fact;
    (0..spec.d())
        .map(|j| {
            let b = spec.noise_moment_curve(j);
            let tau = var_const * simpson(b, 0.0, 1.0, ORACLE_QUADRATURE_NODES);
            let bias = bias_scale * bias_scale * spec.functions[j].derivative_energy(order + 1);
            (tau, bias)
        })
        .collect()
}

/// Optimal constants `c_j^{opt}` for the known design.
pub fn oracle_constants(spec: &DgpSpec, kernel: BaseKernel, order: usize) -> Vec<f64> {
    oracle_integrals(spec, kernel, order)
        .into_iter()
        .map(|(tau, bias)| c_opt_from_integrals(tau, bias, order))
        .collect()
}

/// `h_j = c_j^{opt} n^{-1/(2π+3)}`, clamped to `[0.01, 1/2]`.
pub fn oracle_bandwidths(spec: &DgpSpec, kernel: BaseKernel, order: usize, n: usize) -> Vec<f64> {
    let mut diagnostics = Vec::new();
    oracle_constants(spec, kernel, order)
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            let raw = bandwidth_from_constant(c, n, order);
            clamp_bandwidth(j, raw, DEFAULT_MIN_BANDWIDTH, &mut diagnostics)
        })
        .collect()
}

/// Leading term of `n h Var[m̂_j(x)]`:
/// `(N₁⁻¹N₂N₁⁻¹)₀₀ E[Z_j²σ² | X_j = x] / (p_j(x) E[Z_j² | X_j = x]²)`.
pub fn asymptotic_variance(spec: &DgpSpec, kernel: BaseKernel, order: usize, j: usize, x: f64) -> f64 {
    KernelMoments::new(kernel, order).variance_constant() * spec.conditional_noise_moment(j, x)
}

fn bandwidths_for(spec: &DgpSpec, data: &Dataset, cfg: &StudyConfig) -> Result<Vec<f64>> {
    match &cfg.bandwidth {
        BandwidthPolicy::Oracle => Ok(oracle_bandwidths(spec, cfg.kernel, cfg.order, data.n())),
        BandwidthPolicy::PlugIn => {
            let plugins = fit_plugins(data)?;
            let moments = KernelMoments::new(cfg.kernel, cfg.order);
            Ok(optimal_bandwidths(&plugins, &moments, data, cfg.order)?.h)
        }
        BandwidthPolicy::Fixed { h } => {
            if h.len() != spec.d() {
                return Err(Error::Config(format!("{} fixed bandwidths for d = {}", h.len(), spec.d())));
            }
            Ok(h.clone())
        }
    }
}

/// One replication's fit: level curves on the grid and, for backfitting,
/// the number of sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFit {
    pub curves: Vec<GridFunction>,
    pub iterations: Option<usize>,
    pub bandwidths: Vec<f64>,
}

fn fit_once(
    spec: &DgpSpec,
    data: &Dataset,
    h: &[f64],
    estimator: Estimator,
    cfg: &StudyConfig,
) -> Result<ReplicationFit> {
    let grid = cfg.grid;
    let d = spec.d();
    match estimator {
        Estimator::TrueFunctions => Ok(ReplicationFit {
            curves: truth_curves(spec, grid),
            iterations: None,
            bandwidths: h.to_vec(),
        }),
        Estimator::Sbf => {
            let s = build_smoothers(data, h, cfg.kernel, cfg.order, grid)?;
            let fit = backfit_local_polynomial(&s, &cfg.backfit)?;
            Ok(ReplicationFit {
                curves: fit.levels(),
                iterations: Some(fit.iterations),
                bandwidths: h.to_vec(),
            })
        }
        Estimator::Mi { c } => {
            let primary: Vec<f64> = h.iter().map(|v| v * cfg.mi_scale).collect();
            let mut mi = MiConfig::new(primary.clone(), c, cfg.order);
            mi.secondary_reference = Some(h.to_vec());
            let curves = (0..d)
                .map(|j| mi_estimate(data, j, &mi, cfg.kernel, grid))
                .collect::<Result<_>>()?;
            Ok(ReplicationFit {
                curves,
                iterations: None,
                bandwidths: primary,
            })
        }
        Estimator::OracleComponent => {
            let curves = (0..d)
                .map(|j| {
                    oracle_component_fit(
                        data,
                        j,
                        |k, x| spec.functions[k].eval(x),
                        h[j],
                        cfg.kernel,
                        cfg.order,
                        grid,
                    )
                    .map(|f| f.level())
                })
                .collect::<Result<_>>()?;
            Ok(ReplicationFit {
                curves,
                iterations: None,
                bandwidths: h.to_vec(),
            })
        }
    }
}

pub fn truth_curves(spec: &DgpSpec, grid: Grid) -> Vec<GridFunction> {
    spec.functions
        .iter()
        .map(|f| GridFunction::from_fn(grid, |x| f.eval(x)))
        .collect()
}

/// Fits every estimator on replications `0..reps`; outer index is the
/// replication, inner the estimator.
pub fn replicate(
    spec: &DgpSpec,
    n: usize,
    reps: usize,
    estimators: &[Estimator],
    cfg: &StudyConfig,
) -> Vec<Vec<Result<ReplicationFit>>> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = spec.generate_replication(n, cfg.seed, r as u64);
            match bandwidths_for(spec, &data, cfg) {
                Ok(h) => estimators
                    .iter()
                    .map(|&e| fit_once(spec, &data, &h, e, cfg))
                    .collect(),
                Err(err) => {
                    let msg = err.to_string();
                    estimators
                        .iter()
                        .map(|_| Err(Error::Config(format!("bandwidth selection failed: {msg}"))))
                        .collect()
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentError {
    pub mise: f64,
    pub isb: f64,
    pub iv: f64,
}

/// Integrated error decomposition of a set of replicated curves against
/// the truth. Variances use the `1/R` convention so that
/// `MISE = ISB + IV` holds exactly.
pub fn decompose(curves: &[&GridFunction], truth: &GridFunction) -> ComponentError {
    let grid = truth.grid();
    let r = curves.len() as f64;
    let size = grid.len();
    let mut mean = vec![0.0; size];
    for c in curves {
        for (m, v) in mean.iter_mut().zip(c.values()) {
            *m += v / r;
        }
    }
    let mut sq_err = vec![0.0; size];
    let mut var = vec![0.0; size];
    for c in curves {
        for g in 0..size {
            let v = c.values()[g];
            sq_err[g] += (v - truth.values()[g]).powi(2) / r;
            var[g] += (v - mean[g]).powi(2) / r;
        }
    }
    let bias: Vec<f64> = (0..size).map(|g| (mean[g] - truth.values()[g]).powi(2)).collect();
    ComponentError {
        mise: grid.integrate_values(&sq_err),
        isb: grid.integrate_values(&bias),
        iv: grid.integrate_values(&var),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub label: String,
    pub components: Vec<ComponentError>,
    pub total_mise: f64,
    pub successes: usize,
    pub failures: usize,
    /// Distinct failure messages with their counts.
    pub failure_reasons: Vec<(String, usize)>,
    /// Backfitting sweeps per successful replication.
    pub iterations: Vec<usize>,
    /// Bandwidths averaged over successful replications.
    pub mean_bandwidths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub dgp: String,
    pub n: usize,
    pub reps: usize,
    pub order: usize,
    pub kernel: BaseKernel,
    pub grid_size: usize,
    pub seed: u64,
    pub mi_scale: f64,
    pub estimators: Vec<EstimatorSummary>,
    pub wall_seconds: f64,
}

impl SimulationReport {
    pub fn summary(&self, estimator: Estimator) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == estimator)
    }
}

pub fn run_study(
    spec: &DgpSpec,
    n: usize,
    reps: usize,
    estimators: &[Estimator],
    cfg: &StudyConfig,
) -> Result<SimulationReport> {
    if reps < 2 {
        return Err(Error::Config("a study needs at least two replications".into()));
    }
    if estimators.is_empty() {
        return Err(Error::Config("no estimators requested".into()));
    }
    let start = Instant::now();
    let fits = replicate(spec, n, reps, estimators, cfg);
    let truth = truth_curves(spec, cfg.grid);

    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(e, &estimator)| {
            let mut ok = Vec::new();
            let mut reasons: Vec<(String, usize)> = Vec::new();
            for rep in &fits {
                match &rep[e] {
                    Ok(f) => ok.push(f),
                    Err(err) => {
                        let msg = failure_kind(err);
                        match reasons.iter_mut().find(|(m, _)| *m == msg) {
                            Some((_, c)) => *c += 1,
                            None => reasons.push((msg, 1)),
                        }
                    }
                }
            }
            let components: Vec<ComponentError> = (0..spec.d())
                .map(|j| {
                    if ok.is_empty() {
                        return ComponentError {
                            mise: f64::NAN,
                            isb: f64::NAN,
                            iv: f64::NAN,
                        };
                    }
                    let curves: Vec<&GridFunction> = ok.iter().map(|f| &f.curves[j]).collect();
                    decompose(&curves, &truth[j])
                })
                .collect();
            let mean_bandwidths = (0..spec.d())
                .map(|j| ok.iter().map(|f| f.bandwidths[j]).sum::<f64>() / ok.len().max(1) as f64)
                .collect();
            EstimatorSummary {
                estimator,
                label: estimator.label(),
                total_mise: components.iter().map(|c| c.mise).sum(),
                components,
                successes: ok.len(),
                failures: reps - ok.len(),
                failure_reasons: reasons,
                iterations: ok.iter().filter_map(|f| f.iterations).collect(),
                mean_bandwidths,
            }
        })
        .collect();

    let report = SimulationReport {
        dgp: spec.name.clone(),
        n,
        reps,
        order: cfg.order,
        kernel: cfg.kernel,
        grid_size: cfg.grid.len(),
        seed: cfg.seed,
        mi_scale: cfg.mi_scale,
        estimators: summaries,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    info!("study {} n={n} reps={reps} took {:.1}s", report.dgp, report.wall_seconds);
    Ok(report)
}

fn failure_kind(err: &Error) -> String {
    match err {
        Error::NonConvergence { .. } => "non-convergence".into(),
        Error::NegativeVarianceIntegral { .. } => "negative variance integral".into(),
        Error::MiSingular { .. } => "singular marginal-integration system".into(),
        Error::EmptyWindow { .. } => "empty kernel window".into(),
        Error::SingularPsi { .. } => "singular local design".into(),
        other => other.to_string(),
    }
}

/// Named simulation scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub dgp: DgpSpec,
    pub sizes: Vec<usize>,
    pub estimators: Vec<Estimator>,
    pub mi_scale: f64,
}

pub const MI_MULTIPLIERS: [f64; 4] = [1.0, 3.0, 5.0, 10.0];

impl Preset {
    pub fn by_name(name: &str) -> Option<Preset> {
        let mi: Vec<Estimator> = MI_MULTIPLIERS.iter().map(|&c| Estimator::Mi { c }).collect();
        match name {
            "table1" => {
                let mut estimators = mi;
                estimators.push(Estimator::Sbf);
                Some(Preset {
                    name: "table1",
                    dgp: DgpSpec::three_component(),
                    sizes: vec![100, 400],
                    estimators,
                    mi_scale: 1.0,
                })
            }
            "table2" => Some(Preset {
                name: "table2",
                dgp: DgpSpec::three_component(),
                sizes: vec![100, 400],
                estimators: mi,
                mi_scale: 1.0 / 3.0,
            }),
            "table3" => Some(Preset {
                name: "table3",
                dgp: DgpSpec::ten_component(),
                sizes: vec![100, 400],
                estimators: vec![Estimator::Mi { c: 5.0 }, Estimator::Sbf],
                mi_scale: 1.0,
            }),
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 3] = ["table1", "table2", "table3"];
}

/// Aligned text rendering of one report.
pub fn render_report(report: &SimulationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "dgp={} n={} reps={} order={} kernel={} grid={} seed={} ({:.1}s)",
        report.dgp,
        report.n,
        report.reps,
        report.order,
        report.kernel,
        report.grid_size,
        report.seed,
        report.wall_seconds
    );
    let _ = writeln!(out, "{:<12} {:<6} {:>10} {:>10} {:>10}", "estimator", "m_j", "MISE", "ISB", "IV");
    for s in &report.estimators {
        for (j, c) in s.components.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<12} {:<6} {:>10.4} {:>10.4} {:>10.4}",
                s.label,
                format!("m{}", j + 1),
                c.mise,
                c.isb,
                c.iv
            );
        }
        let _ = write!(out, "{:<12} {:<6} {:>10.4}", s.label, "total", s.total_mise);
        if s.failures > 0 {
            let _ = write!(out, "   ({} of {} replications failed)", s.failures, report.reps);
        }
        if !s.iterations.is_empty() {
            let mean = s.iterations.iter().sum::<usize>() as f64 / s.iterations.len() as f64;
            let max = s.iterations.iter().max().unwrap();
            let _ = write!(out, "   sweeps mean {mean:.2} max {max}");
        }
        let _ = writeln!(out);
    }
    out
}

/// Machine-readable rows `preset,n,estimator,c,component,mise,isb,iv`.
pub fn report_rows(preset: &str, report: &SimulationReport) -> Vec<[String; 8]> {
    let mut rows = Vec::new();
    for s in &report.estimators {
        let (name, c) = match s.estimator {
            Estimator::Mi { c } => ("MI".to_string(), c.to_string()),
            other => (other.label(), String::new()),
        };
        for (j, e) in s.components.iter().enumerate() {
            rows.push([
                preset.to_string(),
                report.n.to_string(),
                name.clone(),
                c.clone(),
                format!("m{}", j + 1),
                e.mise.to_string(),
                e.isb.to_string(),
                e.iv.to_string(),
            ]);
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn decomposition_is_exact() {
        let grid = Grid::new(41).unwrap();
        let truth = GridFunction::from_fn(grid, |x| x * x);
        let curves: Vec<GridFunction> = (0..7)
            .map(|r| GridFunction::from_fn(grid, move |x| x * x + 0.1 * (r as f64 - 2.0) * (3.0 * x).sin() + 0.05))
            .collect();
        let refs: Vec<&GridFunction> = curves.iter().collect();
        let e = decompose(&refs, &truth);
        assert!((e.mise - e.isb - e.iv).abs() < 1e-12);
        assert!(e.isb > 0.0 && e.iv > 0.0);
    }

    #[test]
    fn truth_estimator_has_zero_error() {
        let cfg = StudyConfig {
            grid: Grid::new(21).unwrap(),
            ..StudyConfig::default()
        };
        let report = run_study(&DgpSpec::three_component(), 50, 3, &[Estimator::TrueFunctions], &cfg).unwrap();
        let s = report.summary(Estimator::TrueFunctions).unwrap();
        for c in &s.components {
            assert!(c.mise == 0.0 && c.isb < 1e-28 && c.iv < 1e-28);
        }
    }

    #[test]
    fn needs_two_replications() {
        let cfg = StudyConfig::default();
        assert!(run_study(&DgpSpec::three_component(), 50, 1, &[Estimator::Sbf], &cfg).is_err());
    }

    #[test]
    fn oracle_constants_for_the_three_component_design() {
        let spec = DgpSpec::three_component();
        let ints = oracle_integrals(&spec, BaseKernel::Epanechnikov, 1);
        // Bias integrals: (1/10)² ∫ (m_j'')².
        use std::f64::consts::{E, PI};
        assert_relative_eq!(ints[1].1, 8.0 * PI.powi(4) / 100.0, max_relative = 1e-10);
        assert_relative_eq!(ints[2].1, 0.04, max_relative = 1e-10);
        assert_relative_eq!(ints[0].1, 4.0 * (E * E - 1.0 / (E * E)) / 100.0, max_relative = 1e-10);
        // Variance integrals: (3/5) E[Z_j² σ²] checked against a large sample.
        let data = spec.generate(400_000, 11);
        for j in 0..3 {
            let mc: f64 = (0..data.n())
                .map(|i| {
                    let x: Vec<f64> = (0..3).map(|k| data.x(k)[i]).collect();
                    let z: Vec<f64> = (0..3).map(|k| data.z(k)[i]).collect();
                    z[j] * z[j] * spec.sigma(&x, &z).powi(2)
                })
                .sum::<f64>()
                / data.n() as f64;
            assert_relative_eq!(ints[j].0, 0.6 * mc, max_relative = 0.01);
        }
        let h = oracle_bandwidths(&spec, BaseKernel::Epanechnikov, 1, 100);
        assert!(h.iter().all(|v| *v > 0.05 && *v <= 0.5));
    }

    #[test]
    fn presets_exist() {
        for name in Preset::NAMES {
            assert!(Preset::by_name(name).is_some());
        }
        assert!(Preset::by_name("table9").is_none());
        assert_eq!(Preset::by_name("table3").unwrap().dgp.d(), 10);
    }
}
