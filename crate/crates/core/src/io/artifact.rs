use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::model::ModelSpec;
use super::table::{ingest, raw_design, rescale_design, RangeMode, Table};
use crate::backfit::{backfit_local_polynomial, BackfitConfig};
use crate::bandwidth::{fit_plugins, optimal_bandwidths, BandwidthDiagnostic, BandwidthResult};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::kernel::{check_bandwidth, BaseKernel, KernelMoments};
use crate::smoothers::build_smoothers;

pub const ARTIFACT_FORMAT: &str = "vcsbf-fit/1";

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub order: usize,
    pub kernel: BaseKernel,
    pub grid: Grid,
    pub backfit: BackfitConfig,
    /// Fixed bandwidths; plug-in bandwidths are used when absent.
    pub bandwidths: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            order: 1,
            kernel: BaseKernel::Epanechnikov,
            grid: Grid::default(),
            backfit: BackfitConfig::default(),
            bandwidths: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_train: usize,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    pub bandwidth: Vec<BandwidthDiagnostic>,
    /// Plug-in constants when the bandwidths were estimated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_opt: Option<Vec<f64>>,
}

/// Everything needed to predict from a fit, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub format: String,
    pub model: ModelSpec,
    pub order: usize,
    pub kernel: BaseKernel,
    pub grid_size: usize,
    pub bandwidths: Vec<f64>,
    /// `curves[j][g] = m̂_j(x_g)` on the rescaled covariate.
    pub curves: Vec<Vec<f64>>,
    /// `derivatives[j][k-1][g]`: the `k`-th derivative for `1 ≤ k ≤ π`,
    /// with respect to the rescaled covariate.
    pub derivatives: Vec<Vec<Vec<f64>>>,
    pub diagnostics: FitDiagnostics,
}

impl FitArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: FitArtifact = serde_json::from_str(s)?;
        a.validate()?;
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.format != ARTIFACT_FORMAT {
            return Err(Error::Config(format!("unknown artifact format `{}`", self.format)));
        }
        self.model.validate()?;
        let d = self.model.d();
        if self.model.rescale.len() != d || self.curves.len() != d || self.bandwidths.len() != d {
            return Err(Error::Config("artifact components do not match its model".into()));
        }
        Grid::new(self.grid_size)?;
        if self.curves.iter().any(|c| c.len() != self.grid_size) {
            return Err(Error::Config("artifact curve length differs from its grid".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid_size).expect("validated grid size")
    }

    pub fn curve(&self, j: usize) -> Result<GridFunction> {
        GridFunction::new(self.grid(), self.curves[j].clone())
    }
}

/// Plug-in bandwidths for a model on a table.
pub fn plugin_bandwidths(table: &Table, spec: &ModelSpec, order: usize, kernel: BaseKernel) -> Result<BandwidthResult> {
    let (data, _) = ingest(table, spec)?;
    let plugins = fit_plugins(&data)?;
    optimal_bandwidths(&plugins, &KernelMoments::new(kernel, order), &data, order)
}

/// Ingests `table`, selects bandwidths and runs smooth backfitting.
pub fn fit_model(table: &Table, spec: &ModelSpec, opts: &FitOptions) -> Result<FitArtifact> {
    let (data, fitted) = ingest(table, spec)?;
    data.check_order(opts.order)?;
    let (h, c_opt, bandwidth) = match &opts.bandwidths {
        Some(h) => {
            if h.len() != data.d() {
                return Err(Error::Config(format!("{} bandwidths given for {} terms", h.len(), data.d())));
            }
            for &v in h {
                check_bandwidth(v)?;
            }
            (h.clone(), None, Vec::new())
        }
        None => {
            let plugins = fit_plugins(&data)?;
            let r = optimal_bandwidths(&plugins, &KernelMoments::new(opts.kernel, opts.order), &data, opts.order)?;
            (r.h, Some(r.c_opt), r.diagnostics)
        }
    };
    info!("fitting {} terms on {} rows with bandwidths {h:?}", data.d(), data.n());
    let s = build_smoothers(&data, &h, opts.kernel, opts.order, opts.grid)?;
    let fit = backfit_local_polynomial(&s, &opts.backfit)?;
    Ok(FitArtifact {
        format: ARTIFACT_FORMAT.to_string(),
        model: fitted,
        order: opts.order,
        kernel: opts.kernel,
        grid_size: opts.grid.len(),
        bandwidths: h,
        curves: fit.levels().into_iter().map(GridFunction::into_values).collect(),
        derivatives: fit
            .derivatives
            .into_iter()
            .map(|ds| ds.into_iter().skip(1).map(GridFunction::into_values).collect())
            .collect(),
        diagnostics: FitDiagnostics {
            n_train: data.n(),
            iterations: fit.iterations,
            final_delta: fit.final_delta,
            converged: fit.converged,
            bandwidth,
            c_opt,
        },
    })
}

/// `Ŷ = Σ_j m̂_j(x_j) z_j` with linear interpolation between grid nodes.
pub fn predict(artifact: &FitArtifact, table: &Table, mode: RangeMode) -> Result<Vec<f64>> {
    let terms = &artifact.model.terms;
    let mut raw = raw_design(table, terms)?;
    rescale_design(&mut raw, terms, &artifact.model.rescale, mode)?;
    let curves = (0..terms.len()).map(|j| artifact.curve(j)).collect::<Result<Vec<_>>>()?;
    (0..table.n_rows())
        .map(|i| {
            let mut yhat = 0.0;
            for (j, m) in curves.iter().enumerate() {
                yhat += m.interpolate(raw.x[j][i])? * raw.z[j][i];
            }
            Ok(yhat)
        })
        .collect()
}

/// `Σ(Yᵢ − Ŷᵢ)² / Σ(Yᵢ − Ȳ)²`.
pub fn rspe(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    if predictions.len() != actuals.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} responses",
            predictions.len(),
            actuals.len()
        )));
    }
    if actuals.len() < 2 {
        return Err(Error::Data("relative prediction error needs at least two rows".into()));
    }
    let mean = actuals.iter().sum::<f64>() / actuals.len() as f64;
    let den: f64 = actuals.iter().map(|y| (y - mean).powi(2)).sum();
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let num: f64 = predictions.iter().zip(actuals).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(num / den)
}
