//! Experiment configuration: TOML text, validated into library objects.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use stablegeo::covariance::{CovFamily, CovModel};
use stablegeo::extrap::{Method, SolverConfig};
use stablegeo::grid::GridSpec;
use stablegeo::kriging::{Direction, DEFAULT_ANGLE_TOL};
use stablegeo::measure::{IntegralField, KernelFamily, MeasureSpace, RadialProfile, TabulatedKernel};
use stablegeo::variogram::{NuggetTemplate, TemplateFamily};

use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending entry, or "config" for parse errors.
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl fmt::Display) -> Self {
        Self { field: field.into(), message: message.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at {}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub methods: Vec<String>,
    pub field: FieldSection,
    pub grid: GridSection,
    pub observations: Option<ObsSection>,
    #[serde(default)]
    pub solver: SolverSection,
    pub variogram: Option<VariogramSection>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSection {
    Gaussian {
        covariance: CovSection,
    },
    SubGaussian {
        alpha: f64,
        covariance: CovSection,
    },
    Integral {
        alpha: f64,
        #[serde(default)]
        beta: f64,
        kernel: KernelSection,
        space: SpaceSection,
    },
    ShotNoise {
        intensity: f64,
        kernel: KernelSection,
        /// Second-order model used by the kriging methods.
        covariance: Option<CovSection>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovSection {
    pub family: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub nu: Option<f64>,
    pub sigma2: Option<f64>,
    pub h: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub profile: String,
    pub radius: Option<f64>,
    pub scale: Option<f64>,
    pub height: Option<f64>,
    pub width: Option<f64>,
    pub rate: Option<f64>,
    /// CSV table for the `tabulated` profile.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsSection {
    pub sites: Option<Vec<Vec<f64>>>,
    /// CSV with columns x1..xd and optionally `value`.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_iter: Option<usize>,
    pub gtol: Option<f64>,
    pub anneal_starts: Option<usize>,
    pub anneal_proposals: Option<usize>,
    pub sum_to_one: Option<bool>,
    pub iclsl_max_k: Option<usize>,
    pub iclsl_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariogramSection {
    pub bin_width: Option<f64>,
    pub max_lag: Option<f64>,
    #[serde(default = "default_directions")]
    pub directions: Vec<String>,
    pub angle_tol: Option<f64>,
    /// Template family to fit; no fit when absent.
    pub fit: Option<String>,
    pub nu: Option<f64>,
    /// Starting (nugget, a, b).
    pub init: Option<[f64; 3]>,
}

fn default_directions() -> Vec<String> {
    vec!["all".into()]
}

/// Prediction method named in the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    SimpleKrige,
    OrdinaryKrige,
    Stable(Method),
}

impl MethodKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "simple-krige" => Some(MethodKind::SimpleKrige),
            "ordinary-krige" => Some(MethodKind::OrdinaryKrige),
            other => Method::from_name(other).map(MethodKind::Stable),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::SimpleKrige => "simple-krige",
            MethodKind::OrdinaryKrige => "ordinary-krige",
            MethodKind::Stable(m) => m.name(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FieldSpec {
    Gaussian(CovModel),
    SubGaussian { model: CovModel, alpha: f64 },
    Integral(Arc<IntegralField>),
    ShotNoise { intensity: f64, profile: RadialProfile, covariance: Option<CovModel> },
}

impl FieldSpec {
    pub fn alpha(&self) -> Option<f64> {
        match self {
            FieldSpec::Gaussian(_) => Some(2.0),
            FieldSpec::SubGaussian { alpha, .. } => Some(*alpha),
            FieldSpec::Integral(f) => Some(f.alpha()),
            FieldSpec::ShotNoise { .. } => None,
        }
    }

    pub fn covariance(&self) -> Option<&CovModel> {
        match self {
            FieldSpec::Gaussian(m) | FieldSpec::SubGaussian { model: m, .. } => Some(m),
            FieldSpec::ShotNoise { covariance, .. } => covariance.as_ref(),
            FieldSpec::Integral(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FieldSpec::Gaussian(_) => "gaussian",
            FieldSpec::SubGaussian { .. } => "sub-gaussian",
            FieldSpec::Integral(_) => "integral",
            FieldSpec::ShotNoise { .. } => "shot-noise",
        }
    }
}

#[derive(Debug)]
pub struct VariogramSpec {
    pub edges: Vec<f64>,
    pub directions: Vec<Option<Direction>>,
    pub fit: Option<(NuggetTemplate, [f64; 3])>,
}

/// A validated experiment.
#[derive(Debug)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub field: FieldSpec,
    pub grid: GridSpec,
    pub obs_sites: Vec<Vec<f64>>,
    /// Observed values supplied with the sites; simulated otherwise.
    pub obs_values: Option<Vec<f64>>,
    pub methods: Vec<MethodKind>,
    pub solver: SolverConfig,
    pub variogram: Option<VariogramSpec>,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub methods: Vec<String>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse(&text, base, overrides)
}

/// Parses and validates config text; relative file names resolve against `base`.
pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::new("config", e.to_string().trim_end()))?;
    if overrides.seed.is_some() {
        raw.seed = overrides.seed;
    }
    if !overrides.methods.is_empty() {
        raw.methods = overrides.methods.clone();
    }
    validate(raw, base)
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(field, format!("must be a positive number, got {v}")))
    }
}

fn need(field: &str, v: Option<f64>) -> Result<f64, ConfigError> {
    v.ok_or_else(|| ConfigError::new(field, "missing value"))
}

fn covariance(sec: &CovSection, dim: usize, path: &str) -> Result<CovModel, ConfigError> {
    let get = |k: &str| match k {
        "a" => sec.a,
        "b" => sec.b,
        "nu" => sec.nu,
        "sigma2" => sec.sigma2,
        "h" => sec.h,
        _ => None,
    };
    let fam = CovFamily::from_params(&sec.family, dim, get).map_err(|e| ConfigError::new(format!("{path}.family"), e))?;
    CovModel::new(fam, dim).map_err(|e| ConfigError::new(path, e))
}

fn profile(sec: &KernelSection, path: &str) -> Result<RadialProfile, ConfigError> {
    let f = |k: &str| format!("{path}.{k}");
    Ok(match sec.profile.as_str() {
        "bisquare" => RadialProfile::Bisquare {
            radius: positive(&f("radius"), need(&f("radius"), sec.radius)?)?,
            scale: need(&f("scale"), sec.scale)?,
        },
        "parabolic-cap" => RadialProfile::ParabolicCap {
            radius: positive(&f("radius"), need(&f("radius"), sec.radius)?)?,
            scale: need(&f("scale"), sec.scale)?,
        },
        "cylinder" => RadialProfile::Cylinder {
            radius: positive(&f("radius"), need(&f("radius"), sec.radius)?)?,
            height: need(&f("height"), sec.height)?,
        },
        "gaussian" => RadialProfile::Gaussian {
            width: positive(&f("width"), need(&f("width"), sec.width)?)?,
            scale: need(&f("scale"), sec.scale)?,
        },
        other => return Err(ConfigError::new(f("profile"), format!("'{other}' is not a radial profile"))),
    })
}

fn kernel(sec: &KernelSection, base: &Path, path: &str) -> Result<KernelFamily, ConfigError> {
    let f = |k: &str| format!("{path}.{k}");
    Ok(match sec.profile.as_str() {
        "indicator-box" => KernelFamily::IndicatorBox,
        "span-interval" => KernelFamily::SpanInterval,
        "exponential-ou" => KernelFamily::ExponentialOu { rate: positive(&f("rate"), need(&f("rate"), sec.rate)?)? },
        "tabulated" => {
            let file = sec.file.as_ref().ok_or_else(|| ConfigError::new(f("file"), "missing value"))?;
            let rows = io::read_table(&base.join(file)).map_err(|e| ConfigError::new(f("file"), e))?;
            KernelFamily::Tabulated(Arc::new(TabulatedKernel::from_rows(&rows).map_err(|e| ConfigError::new(f("file"), e))?))
        }
        _ => KernelFamily::MovingAverage(profile(sec, path)?),
    })
}

fn alpha(v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v <= 2.0 {
        Ok(v)
    } else {
        Err(ConfigError::new("field.alpha", format!("must lie in (0, 2], got {v}")))
    }
}

fn direction(name: &str, dim: usize, tol: f64, path: &str) -> Result<Option<Direction>, ConfigError> {
    let axis = match name {
        "all" => return Ok(None),
        "x" => 0,
        "y" => 1,
        "z" => 2,
        other => return Err(ConfigError::new(path, format!("unknown direction '{other}' (use all, x, y or z)"))),
    };
    if axis >= dim {
        return Err(ConfigError::new(path, format!("direction '{name}' needs dimension > {axis}")));
    }
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    Direction::new(name, &v, tol).map(Some).map_err(|e| ConfigError::new(path, e))
}

fn template(name: &str, nu: Option<f64>, dim: usize) -> Result<NuggetTemplate, ConfigError> {
    let nu = || need("variogram.nu", nu);
    let family = match name {
        "exponential" => TemplateFamily::Exponential,
        "gaussian" => TemplateFamily::Gaussian,
        "spherical" => TemplateFamily::Spherical,
        "whittle-matern" => TemplateFamily::WhittleMatern { nu: nu()? },
        "cauchy" => TemplateFamily::Cauchy { nu: nu()? },
        "stable" => TemplateFamily::Stable { nu: nu()? },
        other => return Err(ConfigError::new("variogram.fit", format!("unknown template family '{other}'"))),
    };
    Ok(NuggetTemplate { family, dim })
}

fn validate(raw: RawConfig, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let seed = raw.seed.ok_or_else(|| ConfigError::new("seed", "missing value (a seed is mandatory)"))?;
    let g = &raw.grid;
    let dim = g.lower.len();
    if dim == 0 || g.upper.len() != dim || g.counts.len() != dim {
        return Err(ConfigError::new("grid", "lower, upper and counts must have the same nonzero length"));
    }
    if g.counts.contains(&0) {
        return Err(ConfigError::new("grid.counts", "counts must be positive"));
    }
    if g.lower.iter().zip(&g.upper).any(|(l, u)| !(u >= l)) {
        return Err(ConfigError::new("grid.upper", "upper must not be below lower"));
    }
    let grid = GridSpec::from_bounds(&g.lower, &g.upper, &g.counts).map_err(|e| ConfigError::new("grid", e))?;

    let field = match &raw.field {
        FieldSection::Gaussian { covariance: c } => FieldSpec::Gaussian(covariance(c, dim, "field.covariance")?),
        FieldSection::SubGaussian { alpha: a, covariance: c } => {
            FieldSpec::SubGaussian { model: covariance(c, dim, "field.covariance")?, alpha: alpha(*a)? }
        }
        FieldSection::Integral { alpha: a, beta, kernel: k, space } => {
            if space.lower.len() != dim || space.upper.len() != dim || space.cells.len() != dim {
                return Err(ConfigError::new("field.space", format!("lower, upper and cells need {dim} entries")));
            }
            let sp = MeasureSpace::uniform_grid(&space.lower, &space.upper, &space.cells).map_err(|e| ConfigError::new("field.space", e))?;
            let kern = kernel(k, base, "field.kernel")?;
            let f = IntegralField::new(kern, Arc::new(sp), alpha(*a)?, *beta).map_err(|e| ConfigError::new("field.beta", e))?;
            FieldSpec::Integral(Arc::new(f))
        }
        FieldSection::ShotNoise { intensity, kernel: k, covariance: c } => FieldSpec::ShotNoise {
            intensity: positive("field.intensity", *intensity)?,
            profile: profile(k, "field.kernel")?,
            covariance: c.as_ref().map(|c| covariance(c, dim, "field.covariance")).transpose()?,
        },
    };

    let (obs_sites, obs_values) = match &raw.observations {
        None => (Vec::new(), None),
        Some(o) => match (&o.sites, &o.file) {
            (Some(_), Some(_)) => return Err(ConfigError::new("observations", "give either sites or file, not both")),
            (Some(s), None) => (s.clone(), None),
            (None, Some(file)) => {
                let t = io::read_points(&base.join(file)).map_err(|e| ConfigError::new("observations.file", e))?;
                (t.sites, t.values)
            }
            (None, None) => return Err(ConfigError::new("observations", "needs sites or file")),
        },
    };
    for (i, s) in obs_sites.iter().enumerate() {
        if s.len() != dim {
            return Err(ConfigError::new(format!("observations.sites[{i}]"), format!("expected {dim} coordinates, got {}", s.len())));
        }
    }
    for i in 0..obs_sites.len() {
        if obs_sites[..i].contains(&obs_sites[i]) {
            return Err(ConfigError::new(format!("observations.sites[{i}]"), "duplicate site"));
        }
    }

    let mut methods = Vec::new();
    for (i, name) in raw.methods.iter().enumerate() {
        let path = format!("methods[{i}]");
        let m = MethodKind::from_name(name).ok_or_else(|| ConfigError::new(&path, format!("unknown method '{name}'")))?;
        check_method(m, &field, &path)?;
        methods.push(m);
    }
    if !methods.is_empty() && obs_sites.is_empty() {
        return Err(ConfigError::new("observations", "prediction methods need observation sites"));
    }

    let mut solver = SolverConfig { seed, ..SolverConfig::default() };
    let s = &raw.solver;
    if let Some(v) = s.max_iter {
        solver.max_iter = v;
    }
    if let Some(v) = s.gtol {
        solver.gtol = positive("solver.gtol", v)?;
    }
    if let Some(v) = s.anneal_starts {
        if v == 0 {
            return Err(ConfigError::new("solver.anneal_starts", "must be positive"));
        }
        solver.anneal.starts = v;
    }
    if let Some(v) = s.anneal_proposals {
        solver.anneal.proposals = v;
    }
    if let Some(v) = s.sum_to_one {
        solver.sum_to_one = v;
    }
    if let Some(v) = s.iclsl_max_k {
        solver.iclsl_max_k = v;
    }
    if let Some(v) = s.iclsl_tol {
        solver.iclsl_tol = positive("solver.iclsl_tol", v)?;
    }

    let variogram = match &raw.variogram {
        None => None,
        Some(v) => {
            let extent = g.lower.iter().zip(&g.upper).map(|(l, u)| (u - l) * (u - l)).sum::<f64>().sqrt();
            let max_lag = positive("variogram.max_lag", v.max_lag.unwrap_or(0.5 * extent))?;
            let width = positive("variogram.bin_width", v.bin_width.unwrap_or(max_lag / 15.0))?;
            let nbins = (max_lag / width).ceil() as usize;
            let edges = (0..=nbins).map(|i| i as f64 * width).collect();
            let tol = v.angle_tol.unwrap_or(DEFAULT_ANGLE_TOL);
            let directions = v
                .directions
                .iter()
                .enumerate()
                .map(|(i, d)| direction(d, dim, tol, &format!("variogram.directions[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let fit = match &v.fit {
                None => None,
                Some(name) => {
                    let t = template(name, v.nu, dim)?;
                    let init = v.init.unwrap_or([0.1, 1.0, 1.0]);
                    if init.iter().any(|x| !(*x > 0.0)) {
                        return Err(ConfigError::new("variogram.init", "entries must be positive"));
                    }
                    Some((t, init))
                }
            };
            Some(VariogramSpec { edges, directions, fit })
        }
    };

    Ok(ExperimentConfig { seed, out: raw.out, field, grid, obs_sites, obs_values, methods, solver, variogram })
}

fn check_method(m: MethodKind, field: &FieldSpec, path: &str) -> Result<(), ConfigError> {
    match m {
        MethodKind::SimpleKrige | MethodKind::OrdinaryKrige => {
            if field.covariance().is_none() {
                return Err(ConfigError::new(path, format!("{} needs a covariance model, which a {} field does not carry", m.name(), field.kind())));
            }
        }
        MethodKind::Stable(method) => {
            let a = field
                .alpha()
                .ok_or_else(|| ConfigError::new(path, format!("{} is not defined for a {} field", m.name(), field.kind())))?;
            if let FieldSpec::ShotNoise { .. } = field {
                return Err(ConfigError::new(path, format!("{} is not defined for a shot-noise field", m.name())));
            }
            method.check_alpha(a).map_err(|e| ConfigError::new(path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 1
methods = ["lsl"]
[field]
type = "sub-gaussian"
alpha = 1.5
[field.covariance]
family = "exponential"
a = 1.0
b = 1.0
[grid]
lower = [0.0, 0.0]
upper = [1.0, 1.0]
counts = [3, 3]
[observations]
sites = [[0.1, 0.1], [0.9, 0.2]]
"#;

    fn parse_str(s: &str) -> Result<ExperimentConfig, ConfigError> {
        parse(s, Path::new("."), &Overrides::default())
    }

    #[test]
    fn base_config_validates() {
        let c = parse_str(BASE).unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.grid.len(), 9);
        assert_eq!(c.methods, vec![MethodKind::Stable(Method::Lsl)]);
        assert_eq!(c.solver.seed, 1);
    }

    #[test]
    fn alpha_range_is_checked_per_method() {
        let e = parse_str(&BASE.replace("alpha = 1.5", "alpha = 0.8")).unwrap_err();
        assert_eq!(e.field, "methods[0]");
        assert!(e.message.contains("method requires alpha>1"), "{e}");
        let ok = parse(&BASE.replace("alpha = 1.5", "alpha = 0.8"), Path::new("."), &Overrides { methods: vec!["simple-krige".into()], ..Default::default() });
        assert!(ok.is_ok());
    }

    #[test]
    fn seed_is_mandatory_unless_overridden() {
        let text = BASE.replace("seed = 1\n", "");
        assert_eq!(parse_str(&text).unwrap_err().field, "seed");
        let c = parse(&text, Path::new("."), &Overrides { seed: Some(9), ..Default::default() }).unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_str(&BASE.replace("alpha = 1.5", "alpha = ")).unwrap_err();
        assert_eq!(e.field, "config");
        assert!(e.message.contains("line"), "{e}");
        let e = parse_str(&BASE.replace("[grid]", "[grid]\nbogus = 1")).unwrap_err();
        assert!(e.message.contains("bogus"), "{e}");
    }

    #[test]
    fn incompatible_methods_rejected() {
        let e = parse_str(&BASE.replace("\"lsl\"", "\"best-lsl\"")).unwrap_err();
        assert!(e.message.contains("alpha<=1"), "{e}");
        let e = parse_str(&BASE.replace("\"lsl\"", "\"krige\"")).unwrap_err();
        assert!(e.message.contains("unknown method"));
        let shot = BASE.replace(
            "type = \"sub-gaussian\"\nalpha = 1.5\n[field.covariance]\nfamily = \"exponential\"\na = 1.0\nb = 1.0",
            "type = \"shot-noise\"\nintensity = 5.0\n[field.kernel]\nprofile = \"cylinder\"\nradius = 0.2\nheight = 1.0",
        );
        let e = parse_str(&shot).unwrap_err();
        assert!(e.message.contains("shot-noise"), "{e}");
    }

    #[test]
    fn duplicate_and_misshapen_sites() {
        let e = parse_str(&BASE.replace("[0.9, 0.2]]", "[0.1, 0.1]]")).unwrap_err();
        assert_eq!(e.field, "observations.sites[1]");
        let e = parse_str(&BASE.replace("[0.9, 0.2]]", "[0.9]]")).unwrap_err();
        assert!(e.message.contains("expected 2 coordinates"));
    }

    #[test]
    fn variogram_bins_and_directions() {
        let text = format!("{BASE}\n[variogram]\nmax_lag = 1.0\nbin_width = 0.25\ndirections = [\"all\", \"x\", \"y\"]\nfit = \"exponential\"\n");
        let c = parse_str(&text).unwrap();
        let v = c.variogram.unwrap();
        assert_eq!(v.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(v.directions.len(), 3);
        assert!(v.directions[0].is_none());
        assert!(v.fit.is_some());
        let bad = text.replace("\"y\"]", "\"w\"]");
        assert_eq!(parse_str(&bad).unwrap_err().field, "variogram.directions[2]");
    }
}
