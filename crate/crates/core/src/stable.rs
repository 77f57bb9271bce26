//! Univariate and bivariate α-stable laws: characteristic functions,
//! sampling, spectral measures and dependence measures.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Default Monte-Carlo size for [`moment_constant`].
pub const MOMENT_SAMPLES: usize = 10_000_000;
/// Seed used by [`moment_constant`].
pub const MOMENT_SEED: u64 = 0x5EED_C0DE;

/// Parameters of S_α(σ, β, μ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub mu: f64,
}

impl StableParams {
    /// Validates the parameters. At α = 2 the skewness is set to 0.
    pub fn new(alpha: f64, sigma: f64, beta: f64, mu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidAlpha { alpha, reason: "must lie in (0, 2]" });
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma={sigma} must be >= 0")));
        }
        if !(beta.abs() <= 1.0) {
            return Err(Error::InvalidParameter(format!("beta={beta} must lie in [-1, 1]")));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu={mu} must be finite")));
        }
        let beta = if alpha == 2.0 { 0.0 } else { beta };
        Ok(Self { alpha, sigma, beta, mu })
    }

    /// Standard symmetric law S_α(1, 0, 0).
    pub fn symmetric(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0, 0.0, 0.0)
    }
}

/// Signed power a^{<p>} = sign(a)|a|^p.
#[inline]
pub fn signed_pow(a: f64, p: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.signum() * a.abs().powf(p)
    }
}

/// Characteristic function E exp(iθX) of X ~ S_α(σ, β, μ).
pub fn char_fn(params: &StableParams, theta: f64) -> Complex64 {
    let StableParams { alpha, sigma, beta, mu } = *params;
    if theta == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let at = theta.abs();
    let sg = theta.signum();
    let log = if alpha == 2.0 {
        Complex64::new(-sigma * sigma * theta * theta, mu * theta)
    } else if alpha == 1.0 {
        let s = sigma * at;
        Complex64::new(-s, -s * beta * (2.0 / PI) * sg * at.ln() + mu * theta)
    } else {
        let s = (sigma * at).powf(alpha);
        Complex64::new(-s, s * beta * sg * (PI * alpha / 2.0).tan() + mu * theta)
    };
    log.exp()
}

/// Finite-atom spectral measure Γ on the unit circle together with a shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateSpectralMeasure {
    atoms: Vec<([f64; 2], f64)>,
    shift: [f64; 2],
}

impl BivariateSpectralMeasure {
    pub fn new(atoms: Vec<([f64; 2], f64)>, shift: [f64; 2]) -> Result<Self> {
        for (s, m) in &atoms {
            if ((s[0] * s[0] + s[1] * s[1]).sqrt() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("atom {s:?} is not a unit vector")));
            }
            if !(*m >= 0.0) || !m.is_finite() {
                return Err(Error::InvalidParameter(format!("atom mass {m} must be finite and >= 0")));
            }
        }
        Ok(Self { atoms, shift })
    }

    pub fn atoms(&self) -> &[([f64; 2], f64)] {
        &self.atoms
    }

    pub fn shift(&self) -> [f64; 2] {
        self.shift
    }

    /// Sum of two measures; the shifts add.
    pub fn plus(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self {
            atoms,
            shift: [self.shift[0] + other.shift[0], self.shift[1] + other.shift[1]],
        }
    }
}

/// Characteristic function of the stable vector with spectral measure Γ.
pub fn char_fn_vector(alpha: f64, gamma: &BivariateSpectralMeasure, theta: [f64; 2]) -> Complex64 {
    let mut re = 0.0;
    let mut im = theta[0] * gamma.shift[0] + theta[1] * gamma.shift[1];
    for (s, m) in &gamma.atoms {
        let ip = theta[0] * s[0] + theta[1] * s[1];
        if ip == 0.0 {
            continue;
        }
        let a = ip.abs();
        if alpha == 2.0 {
            re -= ip * ip * m;
        } else if alpha == 1.0 {
            re -= a * m;
            im -= a * (2.0 / PI) * ip.signum() * a.ln() * m;
        } else {
            let p = a.powf(alpha) * m;
            re -= p;
            im += p * ip.signum() * (PI * alpha / 2.0).tan();
        }
    }
    Complex64::new(re, im).exp()
}

/// Draws from a stable law together with the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub seed: u64,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// One draw of S_α(1, β, 0) by the Chambers–Mallows–Stuck transformation.
pub fn standard_draw(alpha: f64, beta: f64, rng: &mut Rng) -> f64 {
    if alpha == 2.0 {
        let z: f64 = StandardNormal.sample(rng);
        return std::f64::consts::SQRT_2 * z;
    }
    // V uniform on (-π/2, π/2), W standard exponential
    let u: f64 = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    let v = -FRAC_PI_2 + PI * u;
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        let a = FRAC_PI_2 + beta * v;
        return (2.0 / PI) * (a * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / a).ln());
    }
    let t = (PI * alpha / 2.0).tan();
    // exact shift for the totally skewed case keeps the support one-sided
    let b = if beta.abs() == 1.0 && alpha < 1.0 {
        beta * FRAC_PI_2
    } else {
        (beta * t).atan() / alpha
    };
    let s = (1.0 + beta * beta * t * t).powf(1.0 / (2.0 * alpha));
    let avb = alpha * (v + b);
    s * avb.sin() / v.cos().powf(1.0 / alpha) * ((v - avb).cos() / w).powf((1.0 - alpha) / alpha)
}

/// One draw of S_α(σ, β, μ).
pub fn draw(params: &StableParams, rng: &mut Rng) -> f64 {
    let StableParams { alpha, sigma, beta, mu } = *params;
    let x = standard_draw(alpha, beta, rng);
    if alpha == 1.0 && sigma > 0.0 {
        sigma * x + (2.0 / PI) * beta * sigma * sigma.ln() + mu
    } else {
        sigma * x + mu
    }
}

/// n i.i.d. draws of S_α(σ, β, μ) from stream 0 of `seed`.
pub fn sample(params: &StableParams, n: usize, seed: u64) -> SampleBatch {
    let mut rng = rng::stream(seed, 0);
    let values = (0..n).map(|_| draw(params, &mut rng)).collect();
    SampleBatch { values, seed }
}

/// Result of the log-log tail regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub alpha: f64,
    /// False when the fitted index is at least 2, i.e. no power tail was detected.
    pub power_tail: bool,
    pub points: usize,
}

/// Least-squares slope of log survival against log |x| for the order
/// statistics between the 99.0th and 99.99th percentiles of |X|.
pub fn tail_index_fit(batch: &SampleBatch) -> Result<TailFit> {
    let n = batch.n();
    if n < 10_000 {
        return Err(Error::InvalidParameter(format!("tail fit needs n >= 10^4, got {n}")));
    }
    let mut a: Vec<f64> = batch.values.iter().map(|v| v.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    if a[0] == a[n - 1] {
        return Err(Error::DegenerateSample);
    }
    let k_lo = ((n as f64) * 1e-4).ceil().max(1.0) as usize;
    let k_hi = ((n as f64) * 1e-2).floor() as usize;
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in k_lo..=k_hi {
        let x = a[k - 1];
        if x <= 0.0 {
            continue;
        }
        let lx = x.ln();
        let ly = (k as f64 / n as f64).ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        m += 1.0;
    }
    let den = m * sxx - sx * sx;
    if m < 2.0 || den <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    let alpha = -(m * sxy - sx * sy) / den;
    Ok(TailFit { alpha, power_tail: alpha < 2.0, points: m as usize })
}

/// Tail index α̂ of a sample; see [`tail_index_fit`].
pub fn tail_index_estimate(batch: &SampleBatch) -> Result<f64> {
    tail_index_fit(batch).map(|f| f.alpha)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// c_{α,β}(p) = (E|ξ|^p)^{1/p} for ξ ~ S_α(1, β, 0), by Monte-Carlo with
/// [`MOMENT_SAMPLES`] draws and a fixed seed.
pub fn moment_constant(alpha: f64, beta: f64, p: f64) -> Result<Estimate> {
    moment_constant_mc(alpha, beta, p, MOMENT_SAMPLES, MOMENT_SEED)
}

/// [`moment_constant`] with explicit sample size and seed.
pub fn moment_constant_mc(alpha: f64, beta: f64, p: f64, n: usize, seed: u64) -> Result<Estimate> {
    let params = StableParams::new(alpha, 1.0, beta, 0.0)?;
    if !(p > 0.0 && p < alpha) {
        return Err(Error::InvalidMomentOrder { p, alpha });
    }
    if alpha == 1.0 && params.beta != 0.0 {
        return Err(Error::UnsupportedSkew);
    }
    let mut rng = rng::stream(seed, 0);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let y = draw(&params, &mut rng).abs().powf(p);
        s += y;
        s2 += y * y;
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = (s2 / nf - mean * mean).max(0.0);
    let se_mean = (var / nf).sqrt();
    let value = mean.powf(1.0 / p);
    // delta method for m ↦ m^{1/p}
    let std_error = value / (p * mean) * se_mean;
    Ok(Estimate { value, std_error })
}

/// Covariation [X₁, X₂]_α = Σ s₁ s₂^{<α−1>} Γ(ds) for α ∈ (1, 2].
pub fn covariation_from_spectral(gamma: &BivariateSpectralMeasure, alpha: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::InvalidAlpha { alpha, reason: "covariation needs alpha in (1, 2]" });
    }
    Ok(gamma
        .atoms
        .iter()
        .map(|(s, m)| s[0] * signed_pow(s[1], alpha - 1.0) * m)
        .sum())
}

/// Spectral measure of a univariate stable law: masses at +1 and −1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSpectralMeasure {
    pub plus: f64,
    pub minus: f64,
}

impl ScalarSpectralMeasure {
    /// Recovers (σ, β) for the given α.
    pub fn scale_and_skew(&self, alpha: f64) -> (f64, f64) {
        let total = self.plus + self.minus;
        let beta = if total > 0.0 { (self.plus - self.minus) / total } else { 0.0 };
        (total.powf(1.0 / alpha), beta)
    }
}

/// Γ({1}) = σ^α(1+β)/2 and Γ({−1}) = σ^α(1−β)/2, for α ∈ (0, 2).
pub fn scalar_spectral_measure(params: &StableParams) -> Result<ScalarSpectralMeasure> {
    if params.alpha >= 2.0 {
        return Err(Error::InvalidAlpha { alpha: params.alpha, reason: "spectral masses need alpha < 2" });
    }
    let sa = params.sigma.powf(params.alpha);
    Ok(ScalarSpectralMeasure {
        plus: sa * (1.0 + params.beta) / 2.0,
        minus: sa * (1.0 - params.beta) / 2.0,
    })
}

/// Codifference σ₁^α + σ₂^α − σ_{X₁−X₂}^α.
pub fn codifference(scale1: f64, scale2: f64, scale_diff: f64, alpha: f64) -> f64 {
    scale1.powf(alpha) + scale2.powf(alpha) - scale_diff.powf(alpha)
}
