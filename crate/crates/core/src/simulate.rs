//! Gaussian fields by dense covariance factorization, sub-Gaussian fields
//! and Poisson shot noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::covariance::CovModel;
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::linalg::jittered_cholesky;
use crate::rng::{self, Rng};
use crate::stable::{draw, StableParams};

/// Largest number of sites accepted by the dense factorization.
pub const GRID_CAP: usize = 4096;

/// Cached factor of a Gram matrix; draws N(0, Σ) vectors.
///
/// Sites with zero variance (e.g. the origin of fractional Brownian
/// fields) are left out of the factorization and always return 0.
#[derive(Debug, Clone)]
pub struct GaussianSimulator {
    n: usize,
    active: Vec<usize>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl GaussianSimulator {
    pub fn new(model: &CovModel, sites: &[Vec<f64>]) -> Result<Self> {
        Self::with_cap(model, sites, GRID_CAP)
    }

    pub fn with_cap(model: &CovModel, sites: &[Vec<f64>], cap: usize) -> Result<Self> {
        if sites.len() > cap {
            return Err(Error::GridTooLarge { sites: sites.len(), cap });
        }
        let g = model.gram(sites)?;
        Self::from_gram(&g)
    }

    /// Simulator for an explicit Gram matrix.
    pub fn from_gram(g: &DMatrix<f64>) -> Result<Self> {
        let n = g.nrows();
        let scale = g.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let active: Vec<usize> = (0..n).filter(|&i| g[(i, i)] > 1e-14 * scale).collect();
        if active.is_empty() {
            return Ok(Self { n, active, factor: DMatrix::zeros(0, 0), jitter: 0.0 });
        }
        for i in 0..n {
            if g[(i, i)] < -1e-14 * scale {
                return Err(Error::NotPsd);
            }
        }
        let sub = DMatrix::from_fn(active.len(), active.len(), |i, j| g[(active[i], active[j])]);
        let (chol, jitter) = jittered_cholesky(&sub)?;
        Ok(Self { n, active, factor: chol.l(), jitter })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Diagonal jitter added to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor over the sites with positive variance.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// One draw; consumes exactly one normal variate per positive-variance site.
    pub fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        let m = self.active.len();
        let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
        let x = &self.factor * z;
        let mut out = vec![0.0; self.n];
        for (k, &i) in self.active.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }
}

/// Zero-mean Gaussian field with covariance `model` at `sites`.
pub fn gaussian_sim_sites(model: &CovModel, sites: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
    let sim = GaussianSimulator::new(model, sites)?;
    Ok(sim.draw(&mut rng::stream(seed, 0)))
}

/// [`gaussian_sim_sites`] on a grid.
pub fn gaussian_sim(model: &CovModel, grid: &GridSpec, seed: u64) -> Result<GridField> {
    check_grid(grid)?;
    let values = gaussian_sim_sites(model, &grid.sites(), seed)?;
    GridField::new(grid.clone(), values, seed, format!("gaussian {}", model.family().name()))
}

fn check_grid(grid: &GridSpec) -> Result<()> {
    if grid.len() > GRID_CAP {
        return Err(Error::GridTooLarge { sites: grid.len(), cap: GRID_CAP });
    }
    Ok(())
}

/// Law of the mixing variable: S_{α/2}((cos(πα/4))^{2/α}, 1, 0).
pub fn mixing_law(alpha: f64) -> Result<StableParams> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidAlpha { alpha, reason: "sub-Gaussian fields need alpha in (0, 2)" });
    }
    let scale = (std::f64::consts::PI * alpha / 4.0).cos().powf(2.0 / alpha);
    StableParams::new(alpha / 2.0, scale, 1.0, 0.0)
}

/// A sub-Gaussian realization A^{1/2}·G together with its mixing draw A.
#[derive(Debug, Clone)]
pub struct SubGaussianDraw {
    pub values: Vec<f64>,
    pub mixing: f64,
}

/// Sub-Gaussian field X = A^{1/2} G. G uses stream 0 of `seed` (the same
/// stream as [`gaussian_sim`]); A uses stream 1.
#[derive(Debug, Clone)]
pub struct SubGaussianSimulator {
    gaussian: GaussianSimulator,
    mixing: StableParams,
}

impl SubGaussianSimulator {
    pub fn new(model: &CovModel, alpha: f64, sites: &[Vec<f64>]) -> Result<Self> {
        let mixing = mixing_law(alpha)?;
        Ok(Self { gaussian: GaussianSimulator::new(model, sites)?, mixing })
    }

    pub fn gaussian(&self) -> &GaussianSimulator {
        &self.gaussian
    }

    /// One realization per seed.
    pub fn realize(&self, seed: u64) -> SubGaussianDraw {
        let a = draw(&self.mixing, &mut rng::stream(seed, 1));
        self.realize_with_mixing(seed, a)
    }

    /// Realization with a prescribed mixing value.
    pub fn realize_with_mixing(&self, seed: u64, a: f64) -> SubGaussianDraw {
        let g = self.gaussian.draw(&mut rng::stream(seed, 0));
        let s = a.sqrt();
        SubGaussianDraw { values: g.iter().map(|v| s * v).collect(), mixing: a }
    }

    /// Realization from caller-managed generators, for long Monte-Carlo loops.
    pub fn realize_from(&self, gauss: &mut Rng, mixing: &mut Rng) -> SubGaussianDraw {
        let a = draw(&self.mixing, mixing);
        let g = self.gaussian.draw(gauss);
        let s = a.sqrt();
        SubGaussianDraw { values: g.iter().map(|v| s * v).collect(), mixing: a }
    }
}

/// Sub-Gaussian field on a grid; the mixing draw is recorded in `meta`.
pub fn subgaussian_sim(model: &CovModel, alpha: f64, grid: &GridSpec, seed: u64) -> Result<(GridField, f64)> {
    check_grid(grid)?;
    let sim = SubGaussianSimulator::new(model, alpha, &grid.sites())?;
    let d = sim.realize(seed);
    let field = GridField::new(
        grid.clone(),
        d.values,
        seed,
        format!("sub-gaussian alpha={alpha} {} A={}", model.family().name(), d.mixing),
    )?;
    Ok((field, d.mixing))
}

/// X(t) = Σᵢ f(t − xᵢ) over a homogeneous Poisson process of intensity λ on
/// the window [lower, upper] padded by `support` on every side.
pub fn shot_noise_sites(
    intensity: f64,
    kernel: &dyn Fn(&[f64]) -> f64,
    support: f64,
    lower: &[f64],
    upper: &[f64],
    sites: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<f64>> {
    let d = lower.len();
    if upper.len() != d || lower.iter().zip(upper).any(|(l, u)| !(u >= l)) {
        return Err(Error::InvalidParameter("shot-noise window bounds are invalid".into()));
    }
    if !(intensity >= 0.0 && intensity.is_finite()) || !(support >= 0.0) {
        return Err(Error::InvalidParameter("intensity and support must be finite and >= 0".into()));
    }
    let lo: Vec<f64> = lower.iter().map(|l| l - support).collect();
    let hi: Vec<f64> = upper.iter().map(|u| u + support).collect();
    let volume: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
    let mut rng = rng::stream(seed, 0);
    let mean = intensity * volume;
    let count = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(&mut rng) as usize
    } else {
        0
    };
    let points: Vec<Vec<f64>> = (0..count)
        .map(|_| lo.iter().zip(&hi).map(|(l, h)| l + (h - l) * rng.gen::<f64>()).collect())
        .collect();
    let mut shift = vec![0.0; d];
    Ok(sites
        .iter()
        .map(|t| {
            points
                .iter()
                .map(|x| {
                    for k in 0..d {
                        shift[k] = t[k] - x[k];
                    }
                    kernel(&shift)
                })
                .sum()
        })
        .collect())
}

/// [`shot_noise_sites`] on a grid whose bounding box is the window.
pub fn shot_noise_sim(intensity: f64, kernel: &dyn Fn(&[f64]) -> f64, support: f64, grid: &GridSpec, seed: u64) -> Result<GridField> {
    let lower = grid.origin.clone();
    let upper: Vec<f64> = (0..grid.dim())
        .map(|a| grid.origin[a] + grid.spacing[a] * grid.counts[a].saturating_sub(1) as f64)
        .collect();
    let values = shot_noise_sites(intensity, kernel, support, &lower, &upper, &grid.sites(), seed)?;
    GridField::new(grid.clone(), values, seed, format!("shot noise intensity={intensity}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovFamily;

    fn wm() -> CovModel {
        CovModel::new(CovFamily::WhittleMatern { a: 2.0, b: 1.0, nu: 1.0 }, 2).unwrap()
    }

    #[test]
    fn factor_reconstructs_gram() {
        let grid = GridSpec::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let g = wm().gram(&grid.sites()).unwrap();
        let sim = GaussianSimulator::from_gram(&g).unwrap();
        let l = sim.factor();
        let mut rec = l * l.transpose();
        for i in 0..rec.nrows() {
            rec[(i, i)] -= sim.jitter();
        }
        assert!((rec - &g).norm() / g.norm() < 1e-8);
    }

    #[test]
    fn deterministic_per_seed() {
        let grid = GridSpec::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[5, 4]).unwrap();
        let a = gaussian_sim(&wm(), &grid, 7).unwrap();
        let b = gaussian_sim(&wm(), &grid, 7).unwrap();
        let c = gaussian_sim(&wm(), &grid, 8).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn fbf_origin_is_zero() {
        let m = CovModel::new(CovFamily::FractionalBrownian { h: 0.5 }, 1).unwrap();
        let grid = GridSpec::from_bounds(&[0.0], &[1.0], &[11]).unwrap();
        for seed in 0..20 {
            let f = gaussian_sim(&m, &grid, seed).unwrap();
            assert_eq!(f.values[0], 0.0);
        }
    }

    #[test]
    fn grid_cap_enforced() {
        let grid = GridSpec::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[65, 64]).unwrap();
        assert_eq!(gaussian_sim(&wm(), &grid, 0).unwrap_err(), Error::GridTooLarge { sites: 4160, cap: GRID_CAP });
    }

    #[test]
    fn not_psd_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(GaussianSimulator::from_gram(&g).unwrap_err(), Error::NotPsd);
    }

    #[test]
    fn forced_mixing_reproduces_gaussian_stream() {
        let grid = GridSpec::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[4, 4]).unwrap();
        let sim = SubGaussianSimulator::new(&wm(), 1.2, &grid.sites()).unwrap();
        let g = gaussian_sim(&wm(), &grid, 11).unwrap();
        assert_eq!(sim.realize_with_mixing(11, 1.0).values, g.values);
    }

    #[test]
    fn mixing_is_positive() {
        let grid = GridSpec::from_bounds(&[0.0], &[1.0], &[3]).unwrap();
        let m = CovModel::new(CovFamily::Exponential { a: 1.0, b: 1.0 }, 1).unwrap();
        let sim = SubGaussianSimulator::new(&m, 1.2, &grid.sites()).unwrap();
        for seed in 0..2000 {
            assert!(sim.realize(seed).mixing > 0.0);
        }
    }

    #[test]
    fn zero_intensity_shot_noise() {
        let grid = GridSpec::from_bounds(&[0.0, 0.0], &[2.0, 2.0], &[3, 3]).unwrap();
        let f = shot_noise_sim(0.0, &|_| 1.0, 1.0, &grid, 5).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }
}
