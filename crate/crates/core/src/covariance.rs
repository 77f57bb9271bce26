//! Parametric covariance families, geometric anisotropy and the
//! positive semi-definiteness check.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues;
use crate::special::{bessel_j_normalized, scaled_bessel_k};

/// Radial profile r ↦ C₀(r) of a user-supplied isotropic model.
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Covariance families. Parameters follow the usual naming: range-type `a`,
/// variance `b`, shape `nu`.
#[derive(Clone)]
pub enum CovFamily {
    WhiteNoise { sigma2: f64 },
    /// Γ(ν+1)(2/ar)^ν J_ν(ar)·b, so that C(0) = b.
    Bessel { a: f64, b: f64, nu: f64 },
    HoleEffect { a: f64, b: f64 },
    Cauchy { a: f64, b: f64, nu: f64 },
    StableFamily { a: f64, b: f64, nu: f64 },
    GaussianModel { a: f64, b: f64 },
    /// b·2^{1−ν}/Γ(ν)·(ar)^ν K_ν(ar), so that C(0) = b.
    WhittleMatern { a: f64, b: f64, nu: f64 },
    Exponential { a: f64, b: f64 },
    Spherical { a: f64, b: f64 },
    /// ½(‖s‖^{2H} + ‖t‖^{2H} − ‖s−t‖^{2H}).
    FractionalBrownian { h: f64 },
    /// Nonstationary isotropic model in ℝ³ built on a Whittle–Matérn profile.
    Cyclone { a: f64, b: f64, nu: f64 },
    /// Isotropic model given by its radial profile. No validity is implied.
    Isotropic { name: String, profile: Profile },
}

impl fmt::Debug for CovFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovFamily::Isotropic { name, .. } => write!(f, "Isotropic({name})"),
            other => write!(f, "{}{:?}", other.name(), other.params()),
        }
    }
}

impl CovFamily {
    /// Name used in configuration files.
    pub fn name(&self) -> &str {
        match self {
            CovFamily::WhiteNoise { .. } => "white-noise",
            CovFamily::Bessel { .. } => "bessel",
            CovFamily::HoleEffect { .. } => "hole-effect",
            CovFamily::Cauchy { .. } => "cauchy",
            CovFamily::StableFamily { .. } => "stable",
            CovFamily::GaussianModel { .. } => "gaussian",
            CovFamily::WhittleMatern { .. } => "whittle-matern",
            CovFamily::Exponential { .. } => "exponential",
            CovFamily::Spherical { .. } => "spherical",
            CovFamily::FractionalBrownian { .. } => "fractional-brownian",
            CovFamily::Cyclone { .. } => "cyclone",
            CovFamily::Isotropic { name, .. } => name,
        }
    }

    /// Named parameters.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        use CovFamily::*;
        match *self {
            WhiteNoise { sigma2 } => vec![("sigma2", sigma2)],
            HoleEffect { a, b } | GaussianModel { a, b } | Exponential { a, b } | Spherical { a, b } => {
                vec![("a", a), ("b", b)]
            }
            Bessel { a, b, nu }
            | Cauchy { a, b, nu }
            | StableFamily { a, b, nu }
            | WhittleMatern { a, b, nu }
            | Cyclone { a, b, nu } => vec![("a", a), ("b", b), ("nu", nu)],
            FractionalBrownian { h } => vec![("h", h)],
            Isotropic { .. } => vec![],
        }
    }

    /// Builds a family from its name and parameter lookup.
    pub fn from_params(name: &str, dim: usize, get: impl Fn(&str) -> Option<f64>) -> Result<Self> {
        let need = |k: &str| get(k).ok_or_else(|| Error::InvalidParameter(format!("{name}: missing parameter '{k}'")));
        Ok(match name {
            "white-noise" => CovFamily::WhiteNoise { sigma2: need("sigma2")? },
            "bessel" => CovFamily::Bessel {
                a: need("a")?,
                b: need("b")?,
                nu: get("nu").unwrap_or((dim as f64 - 2.0) / 2.0),
            },
            "hole-effect" => CovFamily::HoleEffect { a: need("a")?, b: need("b")? },
            "cauchy" => CovFamily::Cauchy { a: need("a")?, b: need("b")?, nu: need("nu")? },
            "stable" => CovFamily::StableFamily { a: need("a")?, b: need("b")?, nu: need("nu")? },
            "gaussian" => CovFamily::GaussianModel { a: need("a")?, b: need("b")? },
            "whittle-matern" => CovFamily::WhittleMatern { a: need("a")?, b: need("b")?, nu: need("nu")? },
            "exponential" => CovFamily::Exponential { a: need("a")?, b: need("b")? },
            "spherical" => CovFamily::Spherical { a: need("a")?, b: need("b")? },
            "fractional-brownian" => CovFamily::FractionalBrownian { h: need("h")? },
            "cyclone" => CovFamily::Cyclone { a: need("a")?, b: need("b")?, nu: need("nu")? },
            other => return Err(Error::InvalidParameter(format!("unknown covariance family '{other}'"))),
        })
    }

    fn validate(&self, dim: usize) -> Result<()> {
        use CovFamily::*;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let pos = |k: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{} must be > 0, got {v}", k)))
            }
        };
        for (k, v) in self.params() {
            match (self, k) {
                (Bessel { .. }, "nu") | (FractionalBrownian { .. }, _) => {}
                _ => pos(k, v)?,
            }
        }
        match *self {
            Bessel { nu, .. } if nu < (dim as f64 - 2.0) / 2.0 => {
                bad(format!("bessel family needs nu >= (d-2)/2 = {}", (dim as f64 - 2.0) / 2.0))
            }
            HoleEffect { .. } | Spherical { .. } if dim > 3 => bad(format!("{} is valid only for d <= 3", self.name())),
            StableFamily { nu, .. } if nu > 2.0 => bad(format!("stable family needs nu in (0, 2], got {nu}")),
            FractionalBrownian { h } if !(h > 0.0 && h <= 1.0) => bad(format!("H must lie in (0, 1], got {h}")),
            Cyclone { .. } if dim != 3 => bad("cyclone model is defined for d = 3".into()),
            _ => Ok(()),
        }
    }

    /// Radial profile C₀(r) of a stationary isotropic family.
    fn radial(&self, r: f64) -> f64 {
        use CovFamily::*;
        match self {
            WhiteNoise { sigma2 } => {
                if r == 0.0 {
                    *sigma2
                } else {
                    0.0
                }
            }
            Bessel { a, b, nu } => b * bessel_j_normalized(*nu, a * r),
            HoleEffect { a, b } => {
                let x = a * r;
                if x == 0.0 {
                    *b
                } else {
                    b * x.sin() / x
                }
            }
            Cauchy { a, b, nu } => b / (1.0 + (a * r).powi(2)).powf(*nu),
            StableFamily { a, b, nu } => b * (-a * r.powf(*nu)).exp(),
            GaussianModel { a, b } => b * (-a * r * r).exp(),
            WhittleMatern { a, b, nu } | Cyclone { a, b, nu } => matern(*a, *b, *nu, r),
            Exponential { a, b } => b * (-a * r).exp(),
            Spherical { a, b } => {
                if r >= *a {
                    0.0
                } else {
                    let u = r / a;
                    b * (1.0 - 1.5 * u + 0.5 * u * u * u)
                }
            }
            FractionalBrownian { .. } => unreachable!("not stationary"),
            Isotropic { profile, .. } => profile(r),
        }
    }
}

fn matern(a: f64, b: f64, nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return b;
    }
    b * 2f64.powf(1.0 - nu) / gamma(nu) * scaled_bessel_k(nu, a * r)
}

/// Symmetric positive definite matrix Q of a geometric anisotropy C₀(√(hᵀQh)).
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyTransform {
    q: DMatrix<f64>,
}

impl AnisotropyTransform {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::InvalidParameter("anisotropy matrix must be square".into()));
        }
        let scale = q.norm().max(f64::MIN_POSITIVE);
        if (&q - q.transpose()).norm() > 1e-12 * scale {
            return Err(Error::InvalidParameter("anisotropy matrix must be symmetric".into()));
        }
        if sym_eigenvalues(&q)[0] <= 1e-12 {
            return Err(Error::InvalidParameter("anisotropy matrix must be positive definite".into()));
        }
        Ok(Self { q })
    }

    /// Q = RᵀΛR for the planar rotation R by `angle` and Λ = diag(l1, l2),
    /// so that √(hᵀQh) = ‖√Λ R h‖.
    pub fn rotated(angle: f64, l1: f64, l2: f64) -> Result<Self> {
        let (c, s) = (angle.cos(), angle.sin());
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let l = DMatrix::from_row_slice(2, 2, &[l1, 0.0, 0.0, l2]);
        let q = r.transpose() * l * r;
        Self::new((&q + q.transpose()) * 0.5)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// √(hᵀQh).
    pub fn norm(&self, h: &[f64]) -> f64 {
        let d = h.len();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += h[i] * self.q[(i, j)] * h[j];
            }
        }
        s.max(0.0).sqrt()
    }
}

/// A covariance model on ℝ^d.
#[derive(Debug, Clone)]
pub struct CovModel {
    family: CovFamily,
    dim: usize,
    aniso: Option<AnisotropyTransform>,
}

impl CovModel {
    pub fn new(family: CovFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        family.validate(dim)?;
        Ok(Self { family, dim, aniso: None })
    }

    /// Isotropic model with a user-supplied radial profile (not checked for validity).
    pub fn from_profile(name: &str, dim: usize, profile: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            family: CovFamily::Isotropic { name: name.to_string(), profile: Arc::new(profile) },
            dim,
            aniso: None,
        }
    }

    pub fn family(&self) -> &CovFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn anisotropy(&self) -> Option<&AnisotropyTransform> {
        self.aniso.as_ref()
    }

    /// True when C(s, t) depends on s − t only.
    pub fn is_stationary(&self) -> bool {
        !matches!(self.family, CovFamily::FractionalBrownian { .. } | CovFamily::Cyclone { .. })
    }

    /// True when C(s, t) depends on ‖s − t‖ only.
    pub fn is_isotropic(&self) -> bool {
        self.is_stationary() && self.aniso.is_none()
    }

    /// C(0) for stationary models.
    pub fn sill(&self) -> f64 {
        if self.is_stationary() {
            self.family.radial(0.0)
        } else {
            f64::NAN
        }
    }

    /// C(s, t).
    pub fn eval(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        for x in [s, t] {
            if x.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
            }
        }
        Ok(self.eval_unchecked(s, t))
    }

    /// C(s, t) without the dimension check.
    pub fn eval_unchecked(&self, s: &[f64], t: &[f64]) -> f64 {
        // fixed argument order keeps nonstationary evaluations exactly symmetric
        let (s, t) = if !self.is_stationary() && s.partial_cmp(t) == Some(std::cmp::Ordering::Greater) {
            (t, s)
        } else {
            (s, t)
        };
        match &self.family {
            CovFamily::FractionalBrownian { h } => {
                let e = 2.0 * h;
                let ns = norm(s);
                let nt = norm(t);
                let nd = dist(s, t);
                0.5 * (ns.powf(e) + nt.powf(e) - nd.powf(e))
            }
            CovFamily::Cyclone { .. } => self.cyclone(s, t),
            fam => {
                let r = match &self.aniso {
                    Some(q) => {
                        let h: Vec<f64> = s.iter().zip(t).map(|(a, b)| a - b).collect();
                        if h.iter().all(|&x| x == 0.0) {
                            0.0
                        } else {
                            q.norm(&h)
                        }
                    }
                    None => dist(s, t),
                };
                fam.radial(r)
            }
        }
    }

    fn cyclone(&self, x: &[f64], y: &[f64]) -> f64 {
        let sx = Matrix3::identity() + Matrix3::from_fn(|i, j| x[i] * x[j]);
        let sy = Matrix3::identity() + Matrix3::from_fn(|i, j| y[i] * y[j]);
        let sum = sx + sy;
        let pref = 2f64.powf(1.5) * sx.determinant().powf(0.25) * sy.determinant().powf(0.25) / sum.determinant().sqrt();
        let h = nalgebra::Vector3::new(x[0] - y[0], x[1] - y[1], x[2] - y[2]);
        let inv = sum.try_inverse().expect("I + xxᵀ + I + yyᵀ is positive definite");
        let q = (h.transpose() * sx * inv * sy * h)[(0, 0)];
        pref * self.family.radial(q.max(0.0).sqrt())
    }

    /// Gram matrix [C(tᵢ, tⱼ)].
    pub fn gram(&self, sites: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        for s in sites {
            if s.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: s.len() });
            }
        }
        let n = sites.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval_unchecked(&sites[i], &sites[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Flat `key = value` description; inverse of [`CovModel::from_text`].
    pub fn to_text(&self) -> Result<String> {
        if let CovFamily::Isotropic { .. } = self.family {
            return Err(Error::Unsupported("user-supplied profiles cannot be serialized"));
        }
        let mut out = format!("family = {}\ndim = {}\n", self.family.name(), self.dim);
        for (k, v) in self.family.params() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        if let Some(q) = &self.aniso {
            let vals: Vec<String> = q.q.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("anisotropy = {}\n", vals.join(" ")));
        }
        Ok(out)
    }

    /// Parses the output of [`CovModel::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        Self::from_key_values(&kv)
    }

    pub(crate) fn from_key_values(kv: &[(String, String)]) -> Result<Self> {
        let get_s = |k: &str| kv.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
        let family = get_s("family").ok_or_else(|| Error::Format("missing 'family'".into()))?;
        let dim: usize = get_s("dim")
            .ok_or_else(|| Error::Format("missing 'dim'".into()))?
            .parse()
            .map_err(|e| Error::Format(format!("dim: {e}")))?;
        let get = |k: &str| get_s(k).and_then(|v| v.parse::<f64>().ok());
        let fam = CovFamily::from_params(&family, dim, get)?;
        let model = Self::new(fam, dim)?;
        match get_s("anisotropy") {
            None => Ok(model),
            Some(q) => {
                let vals: std::result::Result<Vec<f64>, _> = q.split_whitespace().map(str::parse).collect();
                let vals = vals.map_err(|e| Error::Format(format!("anisotropy: {e}")))?;
                if vals.len() != dim * dim {
                    return Err(Error::Format(format!("anisotropy needs {} entries", dim * dim)));
                }
                apply_anisotropy(&model, &AnisotropyTransform::new(DMatrix::from_column_slice(dim, dim, &vals))?)
            }
        }
    }
}

pub(crate) fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected 'key = value'", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// C(h) = C₀(√(hᵀQh)) for an isotropic base model.
pub fn apply_anisotropy(base: &CovModel, q: &AnisotropyTransform) -> Result<CovModel> {
    if !base.is_isotropic() {
        return Err(Error::NotIsotropic);
    }
    if q.dim() != base.dim {
        return Err(Error::DimensionMismatch { expected: base.dim, got: q.dim() });
    }
    Ok(CovModel { family: base.family.clone(), dim: base.dim, aniso: Some(q.clone()) })
}

/// Outcome of a semi-definiteness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefinitenessReport {
    pub ok: bool,
    /// Minimum eigenvalue (psd) or maximum projected eigenvalue (cnsd).
    pub extreme_eigenvalue: f64,
    /// Spectral norm of the matrix used for the relative tolerance.
    pub matrix_norm: f64,
}

/// Relative tolerance of the semi-definiteness checks.
pub const DEFINITENESS_TOL: f64 = 1e-8;

/// Checks the Gram matrix of `model` on `sites` for positive semi-definiteness.
pub fn psd_check(model: &CovModel, sites: &[Vec<f64>]) -> Result<DefinitenessReport> {
    let g = model.gram(sites)?;
    Ok(psd_report(&g))
}

pub(crate) fn psd_report(g: &DMatrix<f64>) -> DefinitenessReport {
    let ev = sym_eigenvalues(g);
    let norm = ev.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = ev.first().copied().unwrap_or(0.0);
    DefinitenessReport { ok: min >= -DEFINITENESS_TOL * norm, extreme_eigenvalue: min, matrix_norm: norm }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(f: CovFamily, d: usize) -> CovModel {
        CovModel::new(f, d).unwrap()
    }

    #[test]
    fn white_noise_split() {
        let w = m(CovFamily::WhiteNoise { sigma2: 3.0 }, 2);
        assert_eq!(w.eval(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 3.0);
        assert_eq!(w.eval(&[0.0, 1.0], &[0.0, 1.5]).unwrap(), 0.0);
        assert!(matches!(w.eval(&[0.0], &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matern_half_is_exponential() {
        let wm = m(CovFamily::WhittleMatern { a: 1.7, b: 2.3, nu: 0.5 }, 2);
        let ex = m(CovFamily::Exponential { a: 1.7, b: 2.3 }, 2);
        for k in 0..20 {
            let h = [0.05 + 0.37 * k as f64, 0.11 * k as f64];
            let (a, b) = (wm.eval(&[0.0, 0.0], &h).unwrap(), ex.eval(&[0.0, 0.0], &h).unwrap());
            assert!((a - b).abs() < 1e-10, "lag {h:?}");
        }
        assert_eq!(wm.eval(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 2.3);
    }

    #[test]
    fn matern_is_continuous_at_origin() {
        for nu in [0.3, 1.0, 2.5] {
            let wm = m(CovFamily::WhittleMatern { a: 2.0, b: 1.0, nu }, 1);
            let v = wm.eval(&[0.0], &[1e-7]).unwrap();
            assert!((v - 1.0).abs() < 1e-4, "nu {nu}: {v}");
        }
    }

    #[test]
    fn bessel_half_is_hole_effect() {
        let be = m(CovFamily::Bessel { a: 1.3, b: 0.8, nu: 0.5 }, 3);
        let he = m(CovFamily::HoleEffect { a: 1.3, b: 0.8 }, 3);
        for k in 0..30 {
            let h = [0.7 * k as f64, 0.2, 0.0];
            let (a, b) = (be.eval(&[0.0; 3], &h).unwrap(), he.eval(&[0.0; 3], &h).unwrap());
            assert!((a - b).abs() < 1e-10, "lag {h:?}: {a} vs {b}");
        }
    }

    #[test]
    fn spherical_support_and_fbf_origin() {
        let sp = m(CovFamily::Spherical { a: 1.5, b: 2.0 }, 2);
        assert_eq!(sp.eval(&[0.0, 0.0], &[1.5, 0.0]).unwrap(), 0.0);
        assert_eq!(sp.eval(&[0.0, 0.0], &[2.0, 1.0]).unwrap(), 0.0);
        let fb = m(CovFamily::FractionalBrownian { h: 0.7 }, 2);
        assert_eq!(fb.eval(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(CovModel::new(CovFamily::Spherical { a: 1.0, b: 1.0 }, 4).is_err());
        assert!(CovModel::new(CovFamily::HoleEffect { a: 1.0, b: 1.0 }, 4).is_err());
        assert!(CovModel::new(CovFamily::StableFamily { a: 1.0, b: 1.0, nu: 2.5 }, 2).is_err());
        assert!(CovModel::new(CovFamily::Exponential { a: -1.0, b: 1.0 }, 2).is_err());
        assert!(CovModel::new(CovFamily::FractionalBrownian { h: 1.2 }, 1).is_err());
        assert!(CovModel::new(CovFamily::Cyclone { a: 1.0, b: 1.0, nu: 1.0 }, 2).is_err());
    }

    #[test]
    fn anisotropy_cases() {
        let ex = m(CovFamily::Exponential { a: 0.9, b: 1.0 }, 2);
        let id = apply_anisotropy(&ex, &AnisotropyTransform::new(DMatrix::identity(2, 2)).unwrap()).unwrap();
        for k in 0..10 {
            let h = [0.3 * k as f64, -0.17 * k as f64];
            assert!((id.eval(&[0.0, 0.0], &h).unwrap() - ex.eval(&[0.0, 0.0], &h).unwrap()).abs() < 1e-15);
        }
        let q = AnisotropyTransform::new(DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        let an = apply_anisotropy(&ex, &q).unwrap();
        let expect = ex.eval(&[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((an.eval(&[0.0, 0.0], &[1.0, 0.0]).unwrap() - expect).abs() < 1e-15);
        assert!(AnisotropyTransform::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        let fb = m(CovFamily::FractionalBrownian { h: 0.5 }, 2);
        assert_eq!(apply_anisotropy(&fb, &q).unwrap_err(), Error::NotIsotropic);
    }

    #[test]
    fn cyclone_variance_and_nonstationarity() {
        let c = m(CovFamily::Cyclone { a: 1.0, b: 1.5, nu: 1.0 }, 3);
        let x = [0.3, -0.2, 0.9];
        assert!((c.eval(&x, &x).unwrap() - 1.5).abs() < 1e-12);
        let y = [0.1, 0.4, 0.0];
        let u = [2.0, 1.0, -1.0];
        let xs: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + b).collect();
        let ys: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a + b).collect();
        assert!((c.eval(&x, &y).unwrap() - c.eval(&xs, &ys).unwrap()).abs() > 1e-3);
    }

    #[test]
    fn psd_cases() {
        let wm = m(CovFamily::WhittleMatern { a: 2.0, b: 1.0, nu: 1.0 }, 2);
        let sites: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.618) % 1.0 * 3.0, (i as f64 * 0.371) % 1.0 * 3.0]).collect();
        assert!(psd_check(&wm, &sites).unwrap().ok);
        let bad = CovModel::from_profile("exp-cubic", 1, |r| (-r * r * r).exp());
        let grid: Vec<Vec<f64>> = (0..60).map(|i| vec![0.1 * i as f64]).collect();
        let rep = psd_check(&bad, &grid).unwrap();
        assert!(!rep.ok && rep.extreme_eigenvalue < -0.5);
        let same = vec![vec![0.2, 0.2]; 5];
        let rep = psd_check(&wm, &same).unwrap();
        assert!(rep.ok && rep.extreme_eigenvalue.abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let q = AnisotropyTransform::rotated(0.4, 3.0, 1.0).unwrap();
        let model = apply_anisotropy(&m(CovFamily::WhittleMatern { a: 2.0, b: 1.0, nu: 1.5 }, 2), &q).unwrap();
        let back = CovModel::from_text(&model.to_text().unwrap()).unwrap();
        let h = [0.3, 0.8];
        assert_eq!(model.eval(&[0.0, 0.0], &h).unwrap(), back.eval(&[0.0, 0.0], &h).unwrap());
    }

    fn all_stationary(d: usize) -> Vec<CovModel> {
        let mut v = vec![
            m(CovFamily::WhiteNoise { sigma2: 1.2 }, d),
            m(CovFamily::Bessel { a: 1.1, b: 1.0, nu: (d as f64 - 2.0) / 2.0 + 0.5 }, d),
            m(CovFamily::Cauchy { a: 0.8, b: 1.0, nu: 1.3 }, d),
            m(CovFamily::StableFamily { a: 0.8, b: 1.0, nu: 1.4 }, d),
            m(CovFamily::GaussianModel { a: 0.8, b: 1.0 }, d),
            m(CovFamily::WhittleMatern { a: 2.0, b: 1.0, nu: 1.0 }, d),
            m(CovFamily::Exponential { a: 0.5, b: 1.0 }, d),
        ];
        if d <= 3 {
            v.push(m(CovFamily::HoleEffect { a: 1.5, b: 1.0 }, d));
            v.push(m(CovFamily::Spherical { a: 1.5, b: 1.0 }, d));
        }
        v
    }

    proptest! {
        #[test]
        fn symmetric_and_stationary(s in proptest::collection::vec(-3.0f64..3.0, 3),
                                    t in proptest::collection::vec(-3.0f64..3.0, 3),
                                    u in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let mut models = all_stationary(3);
            models.push(m(CovFamily::FractionalBrownian { h: 0.35 }, 3));
            models.push(m(CovFamily::Cyclone { a: 1.0, b: 1.0, nu: 1.2 }, 3));
            for model in &models {
                prop_assert_eq!(model.eval(&s, &t).unwrap(), model.eval(&t, &s).unwrap());
                if model.is_stationary() {
                    let su: Vec<f64> = s.iter().zip(&u).map(|(a, b)| a + b).collect();
                    let tu: Vec<f64> = t.iter().zip(&u).map(|(a, b)| a + b).collect();
                    let (a, b) = (model.eval(&s, &t).unwrap(), model.eval(&su, &tu).unwrap());
                    // shifting perturbs the lag by rounding only
                    prop_assert!((a - b).abs() <= 1e-12 || dist(&s, &t) < 1e-9, "{:?}", model.family());
                }
            }
        }

        #[test]
        fn rotation_invariance(s in proptest::collection::vec(-2.0f64..2.0, 3),
                               t in proptest::collection::vec(-2.0f64..2.0, 3),
                               ang in proptest::collection::vec(0.0f64..std::f64::consts::TAU, 3)) {
            let r = nalgebra::Rotation3::from_euler_angles(ang[0], ang[1], ang[2]);
            let rot = |x: &[f64]| { let v = r * nalgebra::Vector3::new(x[0], x[1], x[2]); vec![v[0], v[1], v[2]] };
            let mut models = all_stationary(3);
            models.retain(|m| !matches!(m.family(), CovFamily::WhiteNoise { .. }));
            models.push(m(CovFamily::Cyclone { a: 1.0, b: 1.0, nu: 1.2 }, 3));
            models.push(m(CovFamily::FractionalBrownian { h: 0.35 }, 3));
            for model in &models {
                let (a, b) = (model.eval(&s, &t).unwrap(), model.eval(&rot(&s), &rot(&t)).unwrap());
                prop_assert!((a - b).abs() < 1e-10, "{:?}: {} vs {}", model.family(), a, b);
            }
        }

        #[test]
        fn fbf_self_similar(s in proptest::collection::vec(-2.0f64..2.0, 2),
                            t in proptest::collection::vec(-2.0f64..2.0, 2),
                            lam in 0.1f64..4.0, h in 0.05f64..=1.0) {
            let fb = m(CovFamily::FractionalBrownian { h }, 2);
            let ls: Vec<f64> = s.iter().map(|v| v * lam).collect();
            let lt: Vec<f64> = t.iter().map(|v| v * lam).collect();
            let a = fb.eval(&ls, &lt).unwrap();
            let b = lam.powf(2.0 * h) * fb.eval(&s, &t).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn sill_at_fifty_correlation_lengths() {
        for model in all_stationary(2) {
            let len = match model.family() {
                CovFamily::Cauchy { .. } | CovFamily::Bessel { .. } | CovFamily::HoleEffect { .. } => continue,
                _ => 50.0 * 2.5,
            };
            let v = model.eval(&[0.0, 0.0], &[len, 0.0]).unwrap();
            assert!(v.abs() < 1e-6, "{:?}", model.family());
        }
    }

    #[test]
    fn all_families_psd_on_random_sites() {
        let sites: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64 * 0.7548776662).fract() * 4.0, (i as f64 * 0.5698402910).fract() * 4.0])
            .collect();
        for model in all_stationary(2) {
            assert!(psd_check(&model, &sites).unwrap().ok, "{:?}", model.family());
        }
        let s3: Vec<Vec<f64>> = sites.iter().enumerate().map(|(i, s)| vec![s[0], s[1], (i as f64 * 0.31).fract()]).collect();
        assert!(psd_check(&m(CovFamily::Cyclone { a: 1.0, b: 1.0, nu: 1.0 }, 3), &s3).unwrap().ok);
        assert!(psd_check(&m(CovFamily::FractionalBrownian { h: 0.4 }, 2), &sites).unwrap().ok);
    }
}
