//! Experiment stages: simulate, observe, variogram, fit, predict, report.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};
use stablegeo::extrap::{extrapolate_targets, ExtrapProblem, FieldHandle};
use stablegeo::grid::GridField;
use stablegeo::kriging::{fit_variogram, matheron_grid, write_variogram_csv, EmpiricalBin, Observations, OrdinaryKriging, SimpleKriging, VariogramFit};
use stablegeo::measure::sample_field;
use stablegeo::simulate::{gaussian_sim_sites, shot_noise_sites, SubGaussianSimulator};
use stablegeo::variogram::VarioModel;

use crate::config::{ConfigError, ExperimentConfig, FieldSpec, MethodKind};
use crate::io;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// Library failure with the stage or method it came from.
    Solver { context: String, source: stablegeo::Error },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver { .. } => 3,
            CliError::Io(_) => 1,
        }
    }

    fn solver(context: impl Into<String>) -> impl FnOnce(stablegeo::Error) -> Self {
        let context = context.into();
        move |source| CliError::Solver { context, source }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Solver { context, source } => write!(f, "{context}: {source}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Wall-clock seconds per stage, in execution order.
#[derive(Debug, Default, Clone)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.0.push((stage.into(), t0.elapsed().as_secs_f64()));
        out
    }

    fn to_json(&self) -> Value {
        Value::Object(self.0.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
    }
}

pub struct Simulated {
    pub realization: GridField,
    pub observations: Observations,
}

fn bit_key(s: &[f64]) -> Vec<u64> {
    s.iter().map(|x| x.to_bits()).collect()
}

/// One realization on the grid and at the observation sites. Supplied
/// observation values replace the simulated ones.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulated, CliError> {
    let grid_sites = cfg.grid.sites();
    let lookup: HashMap<Vec<u64>, usize> = grid_sites.iter().enumerate().map(|(k, s)| (bit_key(s), k)).collect();
    let mut all = grid_sites.clone();
    let mut obs_index = Vec::with_capacity(cfg.obs_sites.len());
    for s in &cfg.obs_sites {
        match lookup.get(&bit_key(s)) {
            Some(&k) => obs_index.push(k),
            None => {
                obs_index.push(all.len());
                all.push(s.clone());
            }
        }
    }
    let ctx = CliError::solver("simulate");
    let values = match &cfg.field {
        FieldSpec::Gaussian(model) => gaussian_sim_sites(model, &all, cfg.seed),
        FieldSpec::SubGaussian { model, alpha } => SubGaussianSimulator::new(model, *alpha, &all).map(|s| s.realize(cfg.seed).values),
        FieldSpec::Integral(f) => sample_field(f, &all, cfg.seed),
        FieldSpec::ShotNoise { intensity, profile, .. } => {
            let d = cfg.grid.dim();
            let lower: Vec<f64> = (0..d).map(|a| all.iter().map(|s| s[a]).fold(f64::INFINITY, f64::min)).collect();
            let upper: Vec<f64> = (0..d).map(|a| all.iter().map(|s| s[a]).fold(f64::NEG_INFINITY, f64::max)).collect();
            let kernel = |h: &[f64]| profile.value(h.iter().map(|x| x * x).sum::<f64>().sqrt());
            shot_noise_sites(*intensity, &kernel, profile.support_radius(), &lower, &upper, &all, cfg.seed)
        }
    }
    .map_err(ctx)?;
    let n = grid_sites.len();
    let realization = GridField::new(cfg.grid.clone(), values[..n].to_vec(), cfg.seed, format!("{} field", cfg.field.kind()))
        .map_err(CliError::solver("simulate"))?;
    let obs_values = match &cfg.obs_values {
        Some(v) => v.clone(),
        None => obs_index.iter().map(|&k| values[k]).collect(),
    };
    let observations = Observations::new(cfg.obs_sites.clone(), obs_values).map_err(CliError::solver("observations"))?;
    Ok(Simulated { realization, observations })
}

pub fn empirical_variogram(cfg: &ExperimentConfig, field: &GridField) -> Result<Vec<EmpiricalBin>, CliError> {
    let spec = cfg
        .variogram
        .as_ref()
        .ok_or_else(|| ConfigError::new("variogram", "section is required for this command"))?;
    let mut bins = Vec::new();
    for dir in &spec.directions {
        bins.extend(matheron_grid(&[field], &spec.edges, dir.clone()).map_err(CliError::solver("variogram"))?);
    }
    Ok(bins)
}

/// Fits the configured template to the omnidirectional bins when present,
/// otherwise to every bin.
pub fn fit(cfg: &ExperimentConfig, bins: &[EmpiricalBin]) -> Result<VariogramFit, CliError> {
    let (template, init) = cfg
        .variogram
        .as_ref()
        .and_then(|v| v.fit)
        .ok_or_else(|| ConfigError::new("variogram.fit", "a template family is required for fitting"))?;
    let omni: Vec<EmpiricalBin> = bins.iter().filter(|b| b.direction == "all").cloned().collect();
    let use_bins = if omni.is_empty() { bins } else { &omni };
    fit_variogram(use_bins, template, init, cfg.seed).map_err(CliError::solver("fit"))
}

/// Predictions of one method over the grid.
pub struct MethodOutput {
    pub method: MethodKind,
    pub values: Vec<f64>,
    /// Kriging variance or stable error scale.
    pub errors: Vec<f64>,
    pub objectives: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

pub fn predict(cfg: &ExperimentConfig, method: MethodKind, obs: &Observations, fitted: Option<&VarioModel>) -> Result<MethodOutput, CliError> {
    let targets = cfg.grid.sites();
    let ctx = format!("method {}", method.name());
    let missing = || CliError::Config(ConfigError::new("methods", format!("{} needs a covariance model", method.name())));
    let (values, errors, objectives, weights) = match method {
        MethodKind::SimpleKrige => {
            let model = cfg.field.covariance().ok_or_else(missing)?;
            let sk = SimpleKriging::new(model, obs).map_err(CliError::solver(&ctx))?;
            let sols = targets.par_iter().map(|t| sk.predict(t)).collect::<stablegeo::Result<Vec<_>>>().map_err(CliError::solver(&ctx))?;
            unzip_kriging(sols)
        }
        MethodKind::OrdinaryKrige => {
            let own;
            let vario = match fitted {
                Some(v) => v,
                None => {
                    let model = cfg.field.covariance().ok_or_else(missing)?;
                    own = VarioModel::from_cov(model.clone(), 0.0).map_err(CliError::solver(&ctx))?;
                    &own
                }
            };
            let ok = OrdinaryKriging::new(vario, obs).map_err(CliError::solver(&ctx))?;
            let sols = targets.par_iter().map(|t| ok.predict(t)).collect::<stablegeo::Result<Vec<_>>>().map_err(CliError::solver(&ctx))?;
            unzip_kriging(sols)
        }
        MethodKind::Stable(m) => {
            let handle = match &cfg.field {
                FieldSpec::Gaussian(model) => FieldHandle::SubGaussian { model: model.clone(), alpha: 2.0 },
                FieldSpec::SubGaussian { model, alpha } => FieldHandle::SubGaussian { model: model.clone(), alpha: *alpha },
                FieldSpec::Integral(f) => FieldHandle::Integral(f.clone()),
                FieldSpec::ShotNoise { .. } => return Err(missing()),
            };
            let problem = ExtrapProblem::new(handle, obs.sites().to_vec(), targets[0].clone()).map_err(CliError::solver(&ctx))?;
            let sols = extrapolate_targets(&problem, m, &targets, &cfg.solver).map_err(CliError::solver(&ctx))?;
            let values = sols.iter().map(|s| s.predict(obs.values())).collect();
            let errors = sols.iter().map(|s| s.error_scale.unwrap_or(f64::NAN)).collect();
            let objectives = sols.iter().map(|s| s.objective).collect();
            let weights = sols.into_iter().map(|s| s.weights).collect();
            (values, errors, objectives, weights)
        }
    };
    Ok(MethodOutput { method, values, errors, objectives, weights })
}

type Columns = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

fn unzip_kriging(sols: Vec<stablegeo::kriging::WeightSolution>) -> Columns {
    let values = sols.iter().map(|s| s.predictor_value).collect();
    let errors: Vec<f64> = sols.iter().map(|s| s.error_variance).collect();
    let objectives = errors.clone();
    let weights = sols.into_iter().map(|s| s.weights).collect();
    (values, errors, objectives, weights)
}

fn coord_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

pub fn write_prediction(out: &Path, cfg: &ExperimentConfig, p: &MethodOutput) -> Result<(), CliError> {
    let d = cfg.grid.dim();
    let name = p.method.name();
    let mut header = coord_header(d);
    header.extend(["value".to_string(), "error".to_string()]);
    let sites = cfg.grid.sites();
    io::write_rows(
        &out.join(format!("prediction_{name}.csv")),
        &header,
        sites.iter().enumerate().map(|(k, s)| {
            let mut row = s.clone();
            row.extend([p.values[k], p.errors[k]]);
            row
        }),
    )?;
    let n = p.weights.first().map_or(0, Vec::len);
    let mut header = coord_header(d);
    header.extend((1..=n).map(|i| format!("w{i}")));
    io::write_rows(
        &out.join(format!("weights_{name}.csv")),
        &header,
        sites.iter().zip(&p.weights).map(|(s, w)| s.iter().chain(w).copied().collect()),
    )?;
    Ok(())
}

fn stats(v: &[f64]) -> Value {
    let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        return json!(null);
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    json!({ "mean": mean, "min": min, "max": max })
}

/// Which stages a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stages {
    Simulate,
    Variogram,
    Fit,
    Predict,
    All,
}

/// Inputs that replace a simulated stage.
#[derive(Debug, Default, Clone)]
pub struct Inputs {
    pub field: Option<PathBuf>,
    pub variogram: Option<PathBuf>,
    pub observations: Option<PathBuf>,
}

/// Runs the requested stages, writes the bundle into `out` and returns the
/// summary together with the stage timings.
pub fn execute(cfg: &ExperimentConfig, out: &Path, stages: Stages, inputs: &Inputs) -> Result<(Value, Timings), CliError> {
    std::fs::create_dir_all(out)?;
    let mut timings = Timings::default();
    let mut summary = json!({
        "seed": cfg.seed,
        "field": cfg.field.kind(),
        "alpha": cfg.field.alpha(),
        "grid": { "counts": cfg.grid.counts, "origin": cfg.grid.origin, "spacing": cfg.grid.spacing },
        "observations": cfg.obs_sites.len(),
    });

    let needs_field = matches!(stages, Stages::Simulate | Stages::All)
        || (stages == Stages::Variogram && inputs.field.is_none())
        || (stages == Stages::Fit && inputs.variogram.is_none() && inputs.field.is_none())
        || (stages == Stages::Predict && inputs.observations.is_none());
    let sim = if needs_field { Some(timings.time("simulate", || simulate(cfg))?) } else { None };
    if let Some(s) = &sim {
        if matches!(stages, Stages::Simulate | Stages::All) {
            s.realization.write_csv(io::create(&out.join("realization.csv"))?)?;
            s.observations.write_csv(io::create(&out.join("observations.csv"))?)?;
        }
    }

    let mut fitted: Option<VarioModel> = None;
    let want_vario = match stages {
        Stages::Variogram => true,
        Stages::Fit => inputs.variogram.is_none(),
        Stages::All => cfg.variogram.is_some(),
        _ => false,
    };
    let mut bins = None;
    if want_vario {
        let field = match &inputs.field {
            Some(p) => io::read_grid_field(p).map_err(|e| ConfigError::new("--input", e))?,
            None => sim.as_ref().expect("field simulated").realization.clone(),
        };
        let b = timings.time("variogram", || empirical_variogram(cfg, &field))?;
        write_variogram_csv(&b, io::create(&out.join("variogram.csv"))?)?;
        summary["variogram"] = json!({ "bins": b.len(), "nonempty": b.iter().filter(|x| !x.is_empty()).count() });
        bins = Some(b);
    }
    let want_fit = stages == Stages::Fit || (stages == Stages::All && cfg.variogram.as_ref().is_some_and(|v| v.fit.is_some()));
    if want_fit {
        let b = match (&inputs.variogram, bins) {
            (Some(p), _) => io::read_variogram(p).map_err(|e| ConfigError::new("--input", e))?,
            (None, Some(b)) => b,
            (None, None) => unreachable!("bins computed above"),
        };
        let f = timings.time("fit", || fit(cfg, &b))?;
        let text = f.model.to_text().map_err(CliError::solver("fit"))?;
        io::write_text(&out.join("fitted_model.txt"), &text)?;
        summary["fit"] = json!({
            "nugget": f.params[0], "a": f.params[1], "b": f.params[2],
            "residual": f.residual, "iterations": f.iterations, "converged": f.converged,
        });
        fitted = Some(f.model);
    }

    if matches!(stages, Stages::Predict | Stages::All) {
        let obs = match &inputs.observations {
            Some(p) => {
                let t = io::read_points(p).map_err(|e| ConfigError::new("--input", e))?;
                let values = t.values.ok_or_else(|| ConfigError::new("--input", "observations need a 'value' column"))?;
                if t.sites.iter().any(|s| s.len() != cfg.grid.dim()) {
                    return Err(ConfigError::new("--input", "observation dimension differs from the grid").into());
                }
                Observations::new(t.sites, values).map_err(CliError::solver("observations"))?
            }
            None => sim.as_ref().expect("field simulated").observations.clone(),
        };
        let mut methods = Vec::new();
        for &m in &cfg.methods {
            let p = timings.time(format!("predict:{}", m.name()), || predict(cfg, m, &obs, fitted.as_ref()))?;
            write_prediction(out, cfg, &p)?;
            methods.push(json!({
                "name": m.name(),
                "targets": p.values.len(),
                "error_kind": if matches!(m, MethodKind::Stable(_)) { "scale" } else { "variance" },
                "error": stats(&p.errors),
                "objective": stats(&p.objectives),
            }));
        }
        summary["methods"] = Value::Array(methods);
    }
    summary["timings"] = timings.to_json();
    io::write_text(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("plain json") + "\n"))?;
    Ok((summary, timings))
}
