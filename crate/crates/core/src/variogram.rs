//! Variogram models, sums of variograms and the conditional negative
//! semi-definiteness check.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::covariance::{dist, parse_key_values, psd_report, CovFamily, CovModel, DefinitenessReport, DEFINITENESS_TOL};
use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues;

/// γ as a function of the lag vector.
pub type LagFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One additive part of a variogram.
#[derive(Clone)]
pub enum VarioComponent {
    /// γ(s,t) = ½C(s,s) + ½C(t,t) − C(s,t).
    Covariance(CovModel),
    /// γ(h) = scale·‖h‖^exponent.
    Power { scale: f64, exponent: f64 },
    /// Inner variogram applied to the listed coordinates of s and t.
    Projected { axes: Vec<usize>, inner: Box<VarioModel> },
    /// User-supplied function of the lag vector.
    Lag { name: String, f: LagFn },
}

impl fmt::Debug for VarioComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarioComponent::Covariance(c) => write!(f, "Covariance({:?})", c.family()),
            VarioComponent::Power { scale, exponent } => write!(f, "Power({scale}, {exponent})"),
            VarioComponent::Projected { axes, inner } => write!(f, "Projected({axes:?}, {inner:?})"),
            VarioComponent::Lag { name, .. } => write!(f, "Lag({name})"),
        }
    }
}

/// Variogram γ(s,t) = nugget·1(s≠t) + Σ components.
#[derive(Debug, Clone)]
pub struct VarioModel {
    dim: usize,
    nugget: f64,
    components: Vec<VarioComponent>,
}

impl VarioModel {
    /// Variogram of a covariance model, with an optional nugget.
    pub fn from_cov(model: CovModel, nugget: f64) -> Result<Self> {
        check_nugget(nugget)?;
        Ok(Self { dim: model.dim(), nugget, components: vec![VarioComponent::Covariance(model)] })
    }

    /// γ(h) = scale·‖h‖^exponent, exponent in (0, 2].
    pub fn power(dim: usize, scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0 && exponent > 0.0) {
            return Err(Error::InvalidParameter("power variogram needs scale, exponent > 0".into()));
        }
        Ok(Self { dim, nugget: 0.0, components: vec![VarioComponent::Power { scale, exponent }] })
    }

    /// Pure nugget effect.
    pub fn nugget_only(dim: usize, nugget: f64) -> Result<Self> {
        check_nugget(nugget)?;
        Ok(Self { dim, nugget, components: Vec::new() })
    }

    /// γ(s,t) = f(s − t) for a user-supplied lag function (validity not checked).
    pub fn from_lag_fn(name: &str, dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            nugget: 0.0,
            components: vec![VarioComponent::Lag { name: name.into(), f: Arc::new(f) }],
        }
    }

    /// `inner` acting on the coordinates `axes` of a `dim`-dimensional lag.
    pub fn projected(dim: usize, axes: Vec<usize>, inner: VarioModel) -> Result<Self> {
        if axes.len() != inner.dim || axes.iter().any(|&a| a >= dim) {
            return Err(Error::DimensionMismatch { expected: inner.dim, got: axes.len() });
        }
        Ok(Self { dim, nugget: 0.0, components: vec![VarioComponent::Projected { axes, inner: Box::new(inner) }] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn components(&self) -> &[VarioComponent] {
        &self.components
    }

    /// Limit of γ at infinity when every part has a finite sill.
    pub fn sill(&self) -> Option<f64> {
        let mut s = self.nugget;
        for c in &self.components {
            match c {
                VarioComponent::Covariance(m) if m.is_stationary() => s += m.sill(),
                VarioComponent::Projected { inner, .. } => s += inner.sill()?,
                _ => return None,
            }
        }
        Some(s)
    }

    /// γ(s, t).
    pub fn eval(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        for x in [s, t] {
            if x.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
            }
        }
        Ok(self.eval_unchecked(s, t))
    }

    /// γ(s, t) without the dimension check.
    pub fn eval_unchecked(&self, s: &[f64], t: &[f64]) -> f64 {
        if s == t {
            return 0.0;
        }
        let mut g = self.nugget;
        for c in &self.components {
            g += match c {
                VarioComponent::Covariance(m) => {
                    0.5 * m.eval_unchecked(s, s) + 0.5 * m.eval_unchecked(t, t) - m.eval_unchecked(s, t)
                }
                VarioComponent::Power { scale, exponent } => scale * dist(s, t).powf(*exponent),
                VarioComponent::Projected { axes, inner } => {
                    let ps: Vec<f64> = axes.iter().map(|&a| s[a]).collect();
                    let pt: Vec<f64> = axes.iter().map(|&a| t[a]).collect();
                    inner.eval_unchecked(&ps, &pt)
                }
                VarioComponent::Lag { f, .. } => {
                    let h: Vec<f64> = s.iter().zip(t).map(|(a, b)| a - b).collect();
                    f(&h)
                }
            };
        }
        g
    }

    /// Matrix [γ(tᵢ, tⱼ)].
    pub fn matrix(&self, sites: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let n = sites.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = self.eval(&sites[i], &sites[j])?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Flat text form for nugget plus covariance components.
    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("dim = {}\nnugget = {}\n", self.dim, self.nugget);
        for c in &self.components {
            match c {
                VarioComponent::Covariance(m) => {
                    out.push_str("[component]\n");
                    out.push_str(&m.to_text()?);
                }
                _ => return Err(Error::Unsupported("only covariance-based components can be serialized")),
            }
        }
        Ok(out)
    }

    /// Parses the output of [`VarioModel::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut blocks = text.split("[component]");
        let head = parse_key_values(blocks.next().unwrap_or(""))?;
        let get = |k: &str| head.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
        let dim: usize = get("dim")
            .ok_or_else(|| Error::Format("missing 'dim'".into()))?
            .parse()
            .map_err(|e| Error::Format(format!("dim: {e}")))?;
        let nugget: f64 = get("nugget")
            .unwrap_or_else(|| "0".into())
            .parse()
            .map_err(|e| Error::Format(format!("nugget: {e}")))?;
        let mut model = Self::nugget_only(dim, nugget)?;
        for b in blocks {
            let m = CovModel::from_key_values(&parse_key_values(b)?)?;
            model = compose_sum(&[model, Self::from_cov(m, 0.0)?])?;
        }
        Ok(model)
    }
}

fn check_nugget(nugget: f64) -> Result<()> {
    if nugget >= 0.0 && nugget.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("nugget must be >= 0, got {nugget}")))
    }
}

/// Pointwise sum of variograms.
pub fn compose_sum(models: &[VarioModel]) -> Result<VarioModel> {
    let first = models.first().ok_or(Error::EmptyComposite)?;
    let mut out = VarioModel { dim: first.dim, nugget: 0.0, components: Vec::new() };
    for m in models {
        if m.dim != first.dim {
            return Err(Error::DimensionMismatch { expected: first.dim, got: m.dim });
        }
        out.nugget += m.nugget;
        out.components.extend(m.components.iter().cloned());
    }
    Ok(out)
}

/// Checks Σ wᵢwⱼγ(tᵢ,tⱼ) ≤ tol for all zero-sum w by projecting the variogram
/// matrix onto the zero-sum subspace.
pub fn cnsd_check(model: &VarioModel, sites: &[Vec<f64>]) -> Result<DefinitenessReport> {
    let g = model.matrix(sites)?;
    let n = g.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter("cnsd check needs at least two sites".into()));
    }
    // orthonormal basis of {w : Σw = 0} from the Helmert construction
    let mut basis = DMatrix::zeros(n, n - 1);
    for k in 1..n {
        let c = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            basis[(i, k - 1)] = c;
        }
        basis[(k, k - 1)] = -(k as f64) * c;
    }
    let proj = basis.transpose() * &g * &basis;
    let ev = sym_eigenvalues(&proj);
    let norm = sym_eigenvalues(&g).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let max = *ev.last().unwrap();
    Ok(DefinitenessReport { ok: max <= DEFINITENESS_TOL * norm, extreme_eigenvalue: max, matrix_norm: norm })
}

/// Finite-site necessary condition: e^{−λγ} is positive semi-definite on
/// `sites` for each λ in `lambdas`. Returns one report per λ.
pub fn exp_psd_check(model: &VarioModel, sites: &[Vec<f64>], lambdas: &[f64]) -> Result<Vec<DefinitenessReport>> {
    let g = model.matrix(sites)?;
    Ok(lambdas.iter().map(|&l| psd_report(&g.map(|v| (-l * v).exp()))).collect())
}

/// Variogram template with a nugget, used by the fitting routine.
/// Parameters are ordered (nugget, a, b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuggetTemplate {
    pub family: TemplateFamily,
    pub dim: usize,
}

/// Families accepted by [`NuggetTemplate`]; ν is held fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemplateFamily {
    Exponential,
    Gaussian,
    Spherical,
    WhittleMatern { nu: f64 },
    Cauchy { nu: f64 },
    Stable { nu: f64 },
}

impl NuggetTemplate {
    pub fn build(&self, params: &[f64; 3]) -> Result<VarioModel> {
        let [nugget, a, b] = *params;
        let fam = match self.family {
            TemplateFamily::Exponential => CovFamily::Exponential { a, b },
            TemplateFamily::Gaussian => CovFamily::GaussianModel { a, b },
            TemplateFamily::Spherical => CovFamily::Spherical { a, b },
            TemplateFamily::WhittleMatern { nu } => CovFamily::WhittleMatern { a, b, nu },
            TemplateFamily::Cauchy { nu } => CovFamily::Cauchy { a, b, nu },
            TemplateFamily::Stable { nu } => CovFamily::StableFamily { a, b, nu },
        };
        VarioModel::from_cov(CovModel::new(fam, self.dim)?, nugget)
    }

    /// γ at lag distance h > 0 without building a model.
    pub fn eval_lag(&self, params: &[f64; 3], h: f64) -> Result<f64> {
        let m = self.build(params)?;
        let mut t = vec![0.0; self.dim];
        t[0] = h;
        m.eval(&vec![0.0; self.dim], &t)
    }
}
