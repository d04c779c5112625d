use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use vcsbf::backfit::BackfitConfig;
use vcsbf::io::{
    dataset_model, dataset_table, enumerate_roles, fit_model, plugin_bandwidths, predict, rspe, split,
    FitArtifact, FitOptions, ModelSpec, RangeMode, SplitSpec, Table,
};
use vcsbf::simulate::{
    render_report, report_rows, run_study, BandwidthPolicy, DgpSpec, Estimator, Preset, StudyConfig,
};
use vcsbf::{BaseKernel, Grid};

#[derive(Parser)]
#[command(name = "vcsbf", version, about = "Smooth backfitting for varying-coefficient models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Number of grid nodes (odd, at least 21).
    #[arg(long, global = true, default_value_t = 101)]
    grid: usize,
    /// Local polynomial order.
    #[arg(long, global = true, default_value_t = 1)]
    order: usize,
    #[arg(long, global = true, default_value = "epanechnikov")]
    kernel: BaseKernel,
    #[arg(long, global = true, default_value_t = 20_110_101)]
    seed: u64,
    /// Stopping tolerance of the backfitting sweeps.
    #[arg(long, global = true, default_value_t = 1e-11)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 200)]
    max_iter: usize,
}

impl Global {
    fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid)?)
    }

    fn backfit(&self) -> BackfitConfig {
        BackfitConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            ..BackfitConfig::default()
        }
    }

    fn fit_options(&self, bandwidths: Option<Vec<f64>>) -> Result<FitOptions> {
        Ok(FitOptions {
            order: self.order,
            kernel: self.kernel,
            grid: self.grid()?,
            backfit: self.backfit(),
            bandwidths,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV file and write the fit artifact.
    Fit(FitArgs),
    /// Predict from a fit artifact.
    Predict(PredictArgs),
    /// Report plug-in bandwidths.
    Bandwidth(BandwidthArgs),
    /// Run a Monte Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model specification (TOML).
    #[arg(long)]
    model: PathBuf,
    /// Where to write the fit artifact (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hold out this fraction of rows and report the prediction error on them.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// File of 0-based test row indices.
    #[arg(long, conflicts_with = "test_fraction")]
    test_index: Option<PathBuf>,
    /// Column whose groups receive test rows in proportion to their size.
    #[arg(long)]
    stratify: Option<String>,
    /// Comma-separated fixed bandwidths, one per term.
    #[arg(long, value_delimiter = ',')]
    bandwidths: Option<Vec<f64>>,
    /// Write test-set predictions (or training predictions without a split).
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Fit every arrangement of the model's `pool` into (X, Z) terms.
    #[arg(long)]
    enumerate_roles: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    artifact: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Reject covariates outside the fitted range instead of clamping.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BandwidthArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// table1, table2 or table3.
    #[arg(long)]
    preset: Option<String>,
    /// d3 or d10, when no preset is given.
    #[arg(long, default_value = "d3")]
    dgp: String,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Comma-separated estimators: sbf, oracle, truth, mi:<c>.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Primary marginal-integration bandwidth as a multiple of the optimal one.
    #[arg(long)]
    mi_scale: Option<f64>,
    /// Estimate bandwidths from each replication instead of using the known design.
    #[arg(long)]
    plugin: bool,
    /// Write machine-readable rows (CSV).
    #[arg(long)]
    rows: Option<PathBuf>,
    /// Write the full reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write one generated sample as CSV and print its model specification.
    #[arg(long)]
    emit_data: Option<PathBuf>,
}

fn parse_estimator(s: &str) -> Result<Estimator> {
    let s = s.trim().to_ascii_lowercase();
    Ok(match s.as_str() {
        "sbf" => Estimator::Sbf,
        "oracle" => Estimator::OracleComponent,
        "truth" => Estimator::TrueFunctions,
        _ => match s.strip_prefix("mi:") {
            Some(c) => Estimator::Mi {
                c: c.parse().with_context(|| format!("bad multiplier in `{s}`"))?,
            },
            None => bail!("unknown estimator `{s}`"),
        },
    })
}

fn write_predictions(path: &Path, yhat: &[f64], actual: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match actual {
        Some(y) => {
            w.write_record(["prediction", "actual"])?;
            for (p, a) in yhat.iter().zip(y) {
                w.write_record([p.to_string(), a.to_string()])?;
            }
        }
        None => {
            w.write_record(["prediction"])?;
            for p in yhat {
                w.write_record([p.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn run_fit(g: &Global, a: &FitArgs) -> Result<()> {
    let table = Table::read_csv(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let spec = ModelSpec::load(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let opts = g.fit_options(a.bandwidths.clone())?;

    let split_spec = match (&a.test_fraction, &a.test_index) {
        (None, None) => None,
        (fraction, index) => Some(SplitSpec {
            test_fraction: fraction.unwrap_or(0.0),
            index_file: index.clone(),
            stratify: a.stratify.clone(),
            seed: g.seed,
        }),
    };
    let (train, test) = match &split_spec {
        Some(s) => {
            let (tr, te) = split(&table, s)?;
            (table.select(&tr), Some(table.select(&te)))
        }
        None => (table.clone(), None),
    };

    if a.enumerate_roles {
        let test = test.as_ref().context("--enumerate-roles needs a test split")?;
        let results = enumerate_roles(&train, test, &spec, &opts)?;
        println!("{:<4} {:>8}  model", "#", "RSPE");
        for (i, r) in results.iter().enumerate() {
            let value = r.rspe.map_or("N/A".to_string(), |v| format!("{v:.4}"));
            println!("{:<4} {:>8}  {}", i + 1, value, r.describe());
            if let Some(f) = &r.failure {
                warn!("model {}: {f}", i + 1);
            }
        }
        return Ok(());
    }

    let artifact = fit_model(&train, &spec, &opts)?;
    println!(
        "fitted {} terms on {} rows: {} sweeps, bandwidths {:?}",
        artifact.model.d(),
        artifact.diagnostics.n_train,
        artifact.diagnostics.iterations,
        artifact.bandwidths
    );
    let eval = test.as_ref().unwrap_or(&train);
    let yhat = predict(&artifact, eval, RangeMode::Clamp)?;
    let actual = eval.column(&spec.response)?;
    let label = if test.is_some() { "test" } else { "training" };
    println!("{label} RSPE {:.6} on {} rows", rspe(&yhat, &actual)?, actual.len());
    if let Some(p) = &a.predictions {
        write_predictions(p, &yhat, Some(&actual))?;
    }
    if let Some(out) = &a.out {
        artifact.save(out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let artifact = FitArtifact::load(&a.artifact).with_context(|| format!("reading {}", a.artifact.display()))?;
    let table = Table::read_csv(&a.data)?;
    let mode = if a.strict { RangeMode::Strict } else { RangeMode::Clamp };
    let yhat = predict(&artifact, &table, mode)?;
    let actual = if table.has_column(&artifact.model.response) {
        Some(table.column(&artifact.model.response)?)
    } else {
        None
    };
    if let Some(y) = &actual {
        match rspe(&yhat, y) {
            Ok(v) => println!("RSPE {v:.6} on {} rows", y.len()),
            Err(e) => warn!("{e}"),
        }
    }
    match &a.out {
        Some(p) => write_predictions(p, &yhat, actual.as_deref())?,
        None => {
            for v in &yhat {
                println!("{v}");
            }
        }
    }
    Ok(())
}

fn run_bandwidth(g: &Global, a: &BandwidthArgs) -> Result<()> {
    let table = Table::read_csv(&a.data)?;
    let spec = ModelSpec::load(&a.model)?;
    let r = plugin_bandwidths(&table, &spec, g.order, g.kernel)?;
    println!("{:<28} {:>10} {:>10} {:>12} {:>12}", "term", "c_opt", "h", "int tau p", "int b^2 p");
    for (j, t) in spec.terms.iter().enumerate() {
        println!(
            "{:<28} {:>10.4} {:>10.4} {:>12.4e} {:>12.4e}",
            t.describe(),
            r.c_opt[j],
            r.h[j],
            r.tau_integral[j],
            r.b_integral[j]
        );
    }
    for d in &r.diagnostics {
        println!("note: {d:?}");
    }
    Ok(())
}

fn run_simulate(g: &Global, a: &SimulateArgs) -> Result<()> {
    let preset = match &a.preset {
        Some(name) => Some(Preset::by_name(name).with_context(|| {
            format!("unknown preset `{name}`; expected one of {:?}", Preset::NAMES)
        })?),
        None => None,
    };
    let dgp = match &preset {
        Some(p) => p.dgp.clone(),
        None => DgpSpec::by_name(&a.dgp).with_context(|| format!("unknown dgp `{}`", a.dgp))?,
    };

    if let Some(path) = &a.emit_data {
        let n = a.n.as_ref().and_then(|v| v.first().copied()).unwrap_or(500);
        let data = dgp.generate(n, g.seed);
        dataset_table(&data)?.write_csv(path)?;
        print!("{}", toml::to_string(&dataset_model(&data))?);
        return Ok(());
    }

    let sizes = a
        .n
        .clone()
        .or_else(|| preset.as_ref().map(|p| p.sizes.clone()))
        .unwrap_or_else(|| vec![100]);
    let estimators = match &a.estimators {
        Some(list) => list.iter().map(|s| parse_estimator(s)).collect::<Result<Vec<_>>>()?,
        None => preset.as_ref().map_or_else(|| vec![Estimator::Sbf], |p| p.estimators.clone()),
    };
    let cfg = StudyConfig {
        grid: g.grid()?,
        kernel: g.kernel,
        order: g.order,
        backfit: g.backfit(),
        seed: g.seed,
        bandwidth: if a.plugin { BandwidthPolicy::PlugIn } else { BandwidthPolicy::Oracle },
        mi_scale: a.mi_scale.or(preset.as_ref().map(|p| p.mi_scale)).unwrap_or(1.0),
    };
    let name = preset.as_ref().map_or(dgp.name.as_str(), |p| p.name);

    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &n in &sizes {
        let report = run_study(&dgp, n, a.reps, &estimators, &cfg)?;
        println!("{}", render_report(&report));
        rows.extend(report_rows(name, &report));
        reports.push(report);
    }
    if let Some(path) = &a.rows {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["preset", "n", "estimator", "c", "component", "mise", "isb", "iv"])?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    if let Some(path) = &a.json {
        std::fs::write(path, serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit(a) => run_fit(&cli.global, a),
        Command::Predict(a) => run_predict(a),
        Command::Bandwidth(a) => run_bandwidth(&cli.global, a),
        Command::Simulate(a) => run_simulate(&cli.global, a),
    }
}
