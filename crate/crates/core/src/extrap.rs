//! Linear extrapolation of stable fields: LSL, COL, MCL, best-LSL and
//! ICLSL, the mixed-moment covariation estimator and error reports.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::{dist, CovModel};
use crate::error::{Error, Result};
use crate::linalg::{gram_rank, psd_factor, solve_general};
use crate::measure::{covariation_vectors, IntegralField, RANK_TOL};
use crate::optim::{AnnealConfig, LpSystem};
use crate::rng;
use crate::stable::{moment_constant, signed_pow, Estimate};

/// Covariation function κ(s, t) = [X(s), X(t)]_α.
pub type CovariationFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// The field being predicted.
#[derive(Clone)]
pub enum FieldHandle {
    /// X(t) = ∫ f_t dM on a quadrature space.
    Integral(Arc<IntegralField>),
    /// A^{1/2}G with G Gaussian of covariance `model`.
    SubGaussian { model: CovModel, alpha: f64 },
    /// Only the covariation function is known; supports COL.
    Covariation { alpha: f64, kappa: CovariationFn },
}

impl fmt::Debug for FieldHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldHandle::Integral(x) => write!(f, "Integral({x:?})"),
            FieldHandle::SubGaussian { model, alpha } => write!(f, "SubGaussian({}, alpha={alpha})", model.family().name()),
            FieldHandle::Covariation { alpha, .. } => write!(f, "Covariation(alpha={alpha})"),
        }
    }
}

impl FieldHandle {
    pub fn alpha(&self) -> f64 {
        match self {
            FieldHandle::Integral(f) => f.alpha(),
            FieldHandle::SubGaussian { alpha, .. } | FieldHandle::Covariation { alpha, .. } => *alpha,
        }
    }
}

/// Predict X(target) from X(t₁), …, X(tₙ).
#[derive(Debug, Clone)]
pub struct ExtrapProblem {
    field: FieldHandle,
    sites: Vec<Vec<f64>>,
    target: Vec<f64>,
    allow_singular: bool,
}

/// Predictor families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Lsl,
    Col,
    Mcl,
    BestLsl,
    Iclsl,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lsl => "lsl",
            Method::Col => "col",
            Method::Mcl => "mcl",
            Method::BestLsl => "best-lsl",
            Method::Iclsl => "iclsl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "lsl" => Method::Lsl,
            "col" => Method::Col,
            "mcl" => Method::Mcl,
            "best-lsl" => Method::BestLsl,
            "iclsl" => Method::Iclsl,
            _ => return None,
        })
    }

    /// Range of α the method accepts, as (lower, lower inclusive, upper).
    pub fn check_alpha(&self, alpha: f64) -> Result<()> {
        let ok = match self {
            Method::Lsl | Method::Col | Method::Mcl => alpha > 1.0 && alpha <= 2.0,
            Method::BestLsl => alpha > 0.0 && alpha <= 1.0,
            Method::Iclsl => alpha == 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidAlpha {
                alpha,
                reason: match self {
                    Method::Lsl | Method::Col | Method::Mcl => "method requires alpha>1",
                    Method::BestLsl => "method requires alpha<=1",
                    Method::Iclsl => "method requires alpha=1",
                },
            })
        }
    }
}

/// Solver settings shared by all methods.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Target for the normalized first-order residual.
    pub gtol: f64,
    pub anneal: AnnealConfig,
    pub seed: u64,
    /// Restrict best-LSL weights to Σλ = 1.
    pub sum_to_one: bool,
    pub iclsl_max_k: usize,
    pub iclsl_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gtol: 1e-10,
            anneal: AnnealConfig::default(),
            seed: 0,
            sum_to_one: false,
            iclsl_max_k: 40,
            iclsl_tol: 1e-6,
        }
    }
}

/// Convergence information.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// First-order (LSL) or KKT (MCL) residual; linear residual for COL.
    pub residual: f64,
    /// MCL Lagrange multiplier γ.
    pub multiplier: Option<f64>,
    /// ICLSL: ‖λ^{(k)} − λ^{(k−1)}‖_∞ for k = 2, 3, ….
    pub steps: Vec<f64>,
    /// best-LSL: number of distinct minima kept in A₀.
    pub minima: usize,
}

/// Weights for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapSolution {
    pub weights: Vec<f64>,
    pub method: Method,
    /// H_α(λ) for the LSL family, Σλᵢκ(tᵢ, t) for MCL, max system residual for COL.
    pub objective: f64,
    /// Scale of X̂(t) − X(t), when the field allows computing it.
    pub error_scale: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl ExtrapSolution {
    pub fn predict(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(l, v)| l * v).sum()
    }
}

impl ExtrapProblem {
    pub fn new(field: FieldHandle, sites: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidParameter("at least one observation site is needed".into()));
        }
        let d = target.len();
        if let Some(s) = sites.iter().find(|s| s.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
        let mut seen = HashSet::new();
        for (i, s) in sites.iter().enumerate() {
            let key: Vec<i64> = s.iter().map(|v| (v * 1e12).round() as i64).collect();
            if !seen.insert(key) {
                return Err(Error::DuplicateSite(i));
            }
        }
        Ok(Self { field, sites, target, allow_singular: false })
    }

    /// Skip the full-dimensionality check.
    pub fn allow_singular(mut self, yes: bool) -> Self {
        self.allow_singular = yes;
        self
    }

    /// Same field and sites, another target.
    pub fn with_target(&self, target: &[f64]) -> Self {
        Self { target: target.to_vec(), ..self.clone() }
    }

    pub fn field(&self) -> &FieldHandle {
        &self.field
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn alpha(&self) -> f64 {
        self.field.alpha()
    }

    /// κ(s, t).
    pub fn covariation(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        let alpha = self.alpha();
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::InvalidAlpha { alpha, reason: "covariation needs alpha in (1, 2]" });
        }
        match &self.field {
            FieldHandle::Integral(f) => {
                Ok(covariation_vectors(&f.kernel_vector(s), &f.kernel_vector(t), f.space().weights(), alpha))
            }
            FieldHandle::SubGaussian { model, alpha } => {
                Ok(2f64.powf(-alpha / 2.0) * model.eval(s, t)? * model.eval(t, t)?.powf((alpha - 2.0) / 2.0))
            }
            FieldHandle::Covariation { kappa, .. } => Ok(kappa(s, t)),
        }
    }

    /// The error-scale objective as an L^p residual system; columns follow `order`.
    fn lp_system_ordered(&self, order: &[usize]) -> Result<LpSystem> {
        match &self.field {
            FieldHandle::Integral(f) => {
                let c = f.kernel_vector(&self.target);
                let cols: Vec<Arc<Vec<f64>>> = order.iter().map(|&i| f.kernel_vector(&self.sites[i])).collect();
                let refs: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
                LpSystem::new(&c, &refs, f.space().weights(), f.alpha())
            }
            FieldHandle::SubGaussian { model, .. } => {
                // rows of a factor B with B·Bᵀ = Σ over (target, sites); the scale
                // of a combination is (½·Var)^{1/2}
                let mut pts = vec![self.target.clone()];
                pts.extend(order.iter().map(|&i| self.sites[i].clone()));
                let b = psd_factor(&model.gram(&pts)?);
                let m = pts.len();
                let c: Vec<f64> = (0..m).map(|j| b[(0, j)]).collect();
                let cols: Vec<Vec<f64>> = (1..m).map(|i| (0..m).map(|j| b[(i, j)]).collect()).collect();
                let refs: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
                LpSystem::new(&c, &refs, &vec![0.5; m], 2.0)
            }
            FieldHandle::Covariation { .. } => Err(Error::Unsupported("method needs the field's integral or sub-Gaussian representation")),
        }
    }

    /// Residual system with columns in site order.
    pub fn lp_system(&self) -> Result<LpSystem> {
        self.lp_system_ordered(&(0..self.sites.len()).collect::<Vec<_>>())
    }

    /// Errors with SingularProblem when the site variables are linearly dependent.
    pub fn check_full_dimensional(&self) -> Result<()> {
        if self.allow_singular {
            return Ok(());
        }
        let singular = match &self.field {
            FieldHandle::Integral(f) => f.full_dimensionality(&self.sites).singular,
            FieldHandle::SubGaussian { model, .. } => gram_rank(&model.gram(&self.sites)?, RANK_TOL) < self.sites.len(),
            FieldHandle::Covariation { .. } => false,
        };
        if singular {
            Err(Error::SingularProblem)
        } else {
            Ok(())
        }
    }

    pub fn solve(&self, method: Method, cfg: &SolverConfig) -> Result<ExtrapSolution> {
        match method {
            Method::Lsl => lsl_solve(self, cfg),
            Method::Col => col_solve(self),
            Method::Mcl => mcl_solve(self, cfg),
            Method::BestLsl => best_lsl_solve(self, cfg),
            Method::Iclsl => iclsl_solve(self, cfg),
        }
    }
}

fn error_scale(problem: &ExtrapProblem, weights: &[f64]) -> Option<f64> {
    problem.lp_system().ok().map(|s| s.scale(weights))
}

/// Least scale linear predictor for α ∈ (1, 2]; sub-Gaussian fields are
/// accepted for every α since their error scale is quadratic.
pub fn lsl_solve(problem: &ExtrapProblem, cfg: &SolverConfig) -> Result<ExtrapSolution> {
    if !matches!(problem.field, FieldHandle::SubGaussian { .. }) {
        Method::Lsl.check_alpha(problem.alpha())?;
    } else if !(problem.alpha() > 0.0 && problem.alpha() <= 2.0) {
        return Err(Error::InvalidAlpha { alpha: problem.alpha(), reason: "must lie in (0, 2]" });
    }
    problem.check_full_dimensional()?;
    let sys = problem.lp_system()?;
    let init = sys.least_squares()?;
    let fit = sys.minimize_convex(&init, cfg.max_iter, cfg.gtol);
    if !fit.converged {
        return Err(Error::NonConvergence { iterations: fit.iterations, residual: fit.gradient_residual });
    }
    let h = fit.objective.powf(1.0 / sys.exponent());
    Ok(ExtrapSolution {
        weights: fit.weights,
        method: Method::Lsl,
        objective: h,
        error_scale: Some(h),
        diagnostics: Diagnostics {
            iterations: fit.iterations,
            converged: true,
            residual: fit.gradient_residual,
            ..Default::default()
        },
    })
}

/// Covariation orthogonal linear predictor: Σᵢ λᵢ κ(tᵢ, tⱼ) = κ(t, tⱼ) for all j.
pub fn col_solve(problem: &ExtrapProblem) -> Result<ExtrapSolution> {
    Method::Col.check_alpha(problem.alpha())?;
    let n = problem.sites.len();
    let mut k = DMatrix::zeros(n, n);
    let mut zeta = DVector::zeros(n);
    match &problem.field {
        FieldHandle::Integral(f) => {
            let m = f.space().weights();
            let a = f.alpha();
            let cols: Vec<Arc<Vec<f64>>> = problem.sites.iter().map(|s| f.kernel_vector(s)).collect();
            let ft = f.kernel_vector(&problem.target);
            for j in 0..n {
                for i in 0..n {
                    k[(j, i)] = covariation_vectors(&cols[i], &cols[j], m, a);
                }
                zeta[j] = covariation_vectors(&ft, &cols[j], m, a);
            }
        }
        _ => {
            for j in 0..n {
                for i in 0..n {
                    k[(j, i)] = problem.covariation(&problem.sites[i], &problem.sites[j])?;
                }
                zeta[j] = problem.covariation(&problem.target, &problem.sites[j])?;
            }
        }
    }
    let lam = solve_general(&k, &zeta)?;
    let resid = (&k * &lam - &zeta).amax();
    let weights: Vec<f64> = lam.iter().copied().collect();
    Ok(ExtrapSolution {
        error_scale: error_scale(problem, &weights),
        weights,
        method: Method::Col,
        objective: resid,
        diagnostics: Diagnostics { iterations: 1, converged: true, residual: resid, ..Default::default() },
    })
}

/// Maximization of covariation under scale preservation, for α ∈ (1, 2].
///
/// By homothety of the level sets, the maximizer of ⟨λ, ζ⟩ on {σ_{X̂} = σ₀}
/// is σ₀·y/Ψ(y) where y minimizes Ψ(y) = σ_{Σyᵢ X(tᵢ)} on ⟨y, ζ⟩ = 1. The
/// constraint is eliminated through the coordinate of largest |ζᵢ|.
pub fn mcl_solve(problem: &ExtrapProblem, cfg: &SolverConfig) -> Result<ExtrapSolution> {
    Method::Mcl.check_alpha(problem.alpha())?;
    problem.check_full_dimensional()?;
    let sys = problem.lp_system()?;
    let p = sys.exponent();
    let n = sys.dim();
    let c = sys.target().to_vec();
    let cols: Vec<Vec<f64>> = (0..n).map(|i| sys.column(i)).collect();
    let zeta: Vec<f64> = cols.iter().map(|a| sys.covariation(a, &c)).collect();
    let sigma0 = sys.pow_sum(&c).powf(1.0 / p);
    let col_scale = cols.iter().map(|a| sys.pow_sum(a).powf(1.0 / p)).fold(0.0, f64::max);
    let zmax = zeta.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    if !(zmax > 1e-14 * sigma0.powf(p - 1.0) * col_scale) {
        return Err(Error::ZeroCovariationVector);
    }
    let k = zeta.iter().position(|z| z.abs() == zmax).expect("max is attained");
    let mut y = vec![0.0; n];
    let mut iterations = 0;
    if n == 1 {
        y[0] = 1.0 / zeta[0];
    } else {
        let free: Vec<usize> = (0..n).filter(|&i| i != k).collect();
        let rows = sys.rows();
        let ck: Vec<f64> = cols[k].iter().map(|a| a / zeta[k]).collect();
        let red: Vec<Vec<f64>> = free
            .iter()
            .map(|&i| (0..rows).map(|j| -(cols[i][j] - zeta[i] / zeta[k] * cols[k][j])).collect())
            .collect();
        let refs: Vec<&[f64]> = red.iter().map(|v| v.as_slice()).collect();
        let reduced = LpSystem::new(&ck, &refs, sys.masses(), p)?;
        let init = reduced.least_squares()?;
        let fit = reduced.minimize_convex(&init, cfg.max_iter, cfg.gtol);
        if !fit.converged {
            return Err(Error::NonConvergence { iterations: fit.iterations, residual: fit.gradient_residual });
        }
        iterations = fit.iterations;
        let mut s = 0.0;
        for (&i, &v) in free.iter().zip(&fit.weights) {
            y[i] = v;
            s += zeta[i] * v;
        }
        y[k] = (1.0 - s) / zeta[k];
    }
    let psi = sys.pow_sum(&sys.combination(&y)).powf(1.0 / p);
    let weights: Vec<f64> = y.iter().map(|v| sigma0 * v / psi).collect();
    let comb = sys.combination(&weights);
    let scale_pow = sys.pow_sum(&comb);
    let objective: f64 = weights.iter().zip(&zeta).map(|(l, z)| l * z).sum();
    let gamma = -objective / (p * scale_pow);
    let kkt = cols
        .iter()
        .zip(&zeta)
        .map(|(a, z)| (z + gamma * p * sys.covariation(a, &comb)).abs() / zmax)
        .fold(0.0, f64::max);
    Ok(ExtrapSolution {
        error_scale: Some(sys.scale(&weights)),
        weights,
        method: Method::Mcl,
        objective,
        diagnostics: Diagnostics {
            iterations,
            converged: true,
            residual: kkt,
            multiplier: Some(gamma),
            ..Default::default()
        },
    })
}

/// Order of sites by distance to the target, ties broken by comparing
/// coordinates in turn.
pub fn distance_order(target: &[f64], sites: &[Vec<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sites.len()).collect();
    idx.sort_by(|&i, &j| {
        dist(target, &sites[i])
            .total_cmp(&dist(target, &sites[j]))
            .then_with(|| {
                sites[i]
                    .iter()
                    .zip(&sites[j])
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    idx
}

/// Best LSL predictor for α ∈ (0, 1].
///
/// The global-minimum set A₀ is approximated by multi-start annealing with
/// local polish and snapping to vertices of the residual arrangement, where
/// the minima of the piecewise concave objective lie. Minima within
/// 1e-6·(1 + best) are clustered at 1e-3 and the set is reduced by
/// maximizing λ₁, then λ₂, … in distance order.
pub fn best_lsl_solve(problem: &ExtrapProblem, cfg: &SolverConfig) -> Result<ExtrapSolution> {
    if !matches!(problem.field, FieldHandle::SubGaussian { .. }) {
        Method::BestLsl.check_alpha(problem.alpha())?;
    }
    problem.check_full_dimensional()?;
    let order = distance_order(&problem.target, &problem.sites);
    let full = problem.lp_system_ordered(&order)?;
    let n = full.dim();
    // optional Σλ = 1: λ_n = 1 − Σ_{i<n} μᵢ
    type Lift = Box<dyn Fn(&[f64]) -> Vec<f64>>;
    let (sys, lift): (LpSystem, Lift) = if cfg.sum_to_one {
        let last = full.column(n - 1);
        let c: Vec<f64> = full.target().iter().zip(&last).map(|(c, a)| c - a).collect();
        let cols: Vec<Vec<f64>> = (0..n - 1)
            .map(|i| full.column(i).iter().zip(&last).map(|(a, b)| a - b).collect())
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
        let sys = LpSystem::new(&c, &refs, full.masses(), full.exponent())?;
        (
            sys,
            Box::new(move |mu: &[f64]| {
                let mut l = mu.to_vec();
                l.push(1.0 - mu.iter().sum::<f64>());
                l
            }),
        )
    } else {
        (full.clone(), Box::new(|l: &[f64]| l.to_vec()))
    };
    let m = sys.dim();
    let fref = sys.target_pow();

    let finish = |reps: Vec<Vec<f64>>, minima: usize, objective: f64| -> ExtrapSolution {
        let ordered = lift(&reps[0]);
        let mut weights = vec![0.0; n];
        for (k, &i) in order.iter().enumerate() {
            weights[i] = ordered[k];
        }
        let h = objective.powf(1.0 / sys.exponent());
        ExtrapSolution {
            weights,
            method: Method::BestLsl,
            objective: h,
            error_scale: Some(h),
            diagnostics: Diagnostics { iterations: cfg.anneal.starts, converged: true, minima, ..Default::default() },
        }
    };

    if m == 0 {
        return Ok(finish(vec![vec![]], 1, sys.objective(&[])));
    }

    let ls = sys.least_squares()?;
    let mut starts = vec![ls.clone(), vec![0.0; m]];
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        starts.push(e);
    }
    // an exact fit is the unique global minimum
    if let Some(exact) = starts.iter().find(|s| sys.objective(s) <= 1e-28 * fref) {
        return Ok(finish(vec![exact.clone()], 1, sys.objective(exact)));
    }
    if sys.exponent() > 1.0 {
        let fit = sys.minimize_convex(&ls, cfg.max_iter, cfg.gtol);
        return Ok(finish(vec![fit.weights], 1, fit.objective));
    }

    let annealed: Vec<Vec<f64>> = (0..cfg.anneal.starts)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(cfg.seed, 1 + s as u64);
            sys.anneal(&ls, &cfg.anneal, &mut r)
        })
        .collect();
    let candidates: Vec<(Vec<f64>, f64)> = starts
        .into_iter()
        .chain(annealed)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|s| {
            let x = sys.polish(s, 200);
            let fx = sys.objective(&x);
            match sys.vertex_near(&x) {
                Some(v) => {
                    let fv = sys.objective(&v);
                    if fv <= fx * (1.0 + 1e-12) {
                        (v, fv)
                    } else {
                        (x, fx)
                    }
                }
                None => (x, fx),
            }
        })
        .collect();
    let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let tol = 1e-6 * (1.0 + best);
    let mut reps: Vec<Vec<f64>> = Vec::new();
    for (x, fx) in &candidates {
        if *fx <= best + tol && !reps.iter().any(|r| r.iter().zip(x).all(|(a, b)| (a - b).abs() <= 1e-3)) {
            reps.push(x.clone());
        }
    }
    let minima = reps.len();
    for j in 0..m {
        let top = reps.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        reps.retain(|r| r[j] >= top - 1e-9 * (1.0 + top.abs()));
    }
    let obj = sys.objective(&reps[0]);
    Ok(finish(reps, minima, obj))
}

/// Index-continuous LSL predictor at α = 1: limit of LSL weights at
/// stability indices γ_k = 1 + 2^{−k}.
pub fn iclsl_solve(problem: &ExtrapProblem, cfg: &SolverConfig) -> Result<ExtrapSolution> {
    Method::Iclsl.check_alpha(problem.alpha())?;
    problem.check_full_dimensional()?;
    let base = problem.lp_system()?;
    let mut lambda = base.least_squares()?;
    let mut prev: Option<Vec<f64>> = None;
    let mut steps = Vec::new();
    let mut iterations = 0;
    for k in 1..=cfg.iclsl_max_k {
        let sys = base.with_exponent(1.0 + 0.5f64.powi(k as i32));
        let fit = sys.minimize_convex(&lambda, cfg.max_iter, cfg.gtol);
        iterations += fit.iterations;
        lambda = fit.weights;
        if let Some(p) = &prev {
            let step = p.iter().zip(&lambda).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            steps.push(step);
            if step < cfg.iclsl_tol {
                let h = base.scale(&lambda);
                return Ok(ExtrapSolution {
                    weights: lambda,
                    method: Method::Iclsl,
                    objective: h,
                    error_scale: Some(h),
                    diagnostics: Diagnostics { iterations, converged: true, residual: step, steps, ..Default::default() },
                });
            }
        }
        prev = Some(lambda.clone());
    }
    Err(Error::NonConvergence { iterations, residual: steps.last().copied().unwrap_or(f64::NAN) })
}

/// Estimate of [X₁, X₂]_α from paired samples with symmetric X₂:
/// σ₂^α · mean(X₁X₂^{<p−1>}) / mean(|X₂|^p), with a delta-method standard error.
pub fn covariation_mixed_moment_estimate(x1: &[f64], x2: &[f64], alpha: f64, p: f64, sigma2: f64) -> Result<Estimate> {
    if !(p >= 1.0 && p < alpha) {
        return Err(Error::InvalidMomentOrder { p, alpha });
    }
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch { expected: x1.len(), got: x2.len() });
    }
    if x1.len() < 2 {
        return Err(Error::DegenerateSample);
    }
    let n = x1.len() as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&u, &v) in x1.iter().zip(x2) {
        let a = u * signed_pow(v, p - 1.0);
        let b = v.abs().powf(p);
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    let (ma, mb) = (sa / n, sb / n);
    if mb == 0.0 {
        return Err(Error::DegenerateSample);
    }
    let r = ma / mb;
    let (va, vb, cab) = (saa / n - ma * ma, sbb / n - mb * mb, sab / n - ma * mb);
    let var_r = ((va - 2.0 * r * cab + r * r * vb) / (n * mb * mb)).max(0.0);
    let s = sigma2.powf(alpha);
    Ok(Estimate { value: s * r, std_error: s * var_r.sqrt() })
}

/// Sup-error diagnostic over probe sites.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// c_α(p) = (E|ξ|^p)^{1/p} for standard SαS ξ.
    pub moment_constant: f64,
    pub sup_scale: f64,
    /// (probe, c_α(p)·σ_{X̂(t)−X(t)}) per probe site.
    pub per_site: Vec<(Vec<f64>, f64)>,
}

/// sup over probes of c_α(p)·‖f_t − Σλᵢ(t) f_{tᵢ}‖_α, solving `method` at
/// every probe. Requires p ∈ (1, α).
pub fn error_report(problem: &ExtrapProblem, method: Method, probes: &[Vec<f64>], p: f64, cfg: &SolverConfig) -> Result<ErrorReport> {
    let alpha = problem.alpha();
    if !(p > 1.0 && p < alpha) {
        return Err(Error::InvalidMomentOrder { p, alpha });
    }
    let c = moment_constant(alpha, 0.0, p)?.value;
    error_report_with_constant(problem, method, probes, c, cfg)
}

/// [`error_report`] with a precomputed moment constant.
pub fn error_report_with_constant(
    problem: &ExtrapProblem,
    method: Method,
    probes: &[Vec<f64>],
    moment: f64,
    cfg: &SolverConfig,
) -> Result<ErrorReport> {
    let per_site: Vec<(Vec<f64>, f64)> = probes
        .par_iter()
        .map(|t| {
            let pr = problem.with_target(t);
            let sol = pr.solve(method, cfg)?;
            let scale = match sol.error_scale {
                Some(s) => s,
                None => pr.lp_system()?.scale(&sol.weights),
            };
            Ok((t.clone(), moment * scale))
        })
        .collect::<Result<_>>()?;
    let sup_scale = per_site.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok(ErrorReport { moment_constant: moment, sup_scale, per_site })
}

/// Solves `method` at every target in parallel on the current rayon pool;
/// output follows the target order.
pub fn extrapolate_targets(problem: &ExtrapProblem, method: Method, targets: &[Vec<f64>], cfg: &SolverConfig) -> Result<Vec<ExtrapSolution>> {
    targets.par_iter().map(|t| problem.with_target(t).solve(method, cfg)).collect()
}
