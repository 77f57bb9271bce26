//! Weighted L^p residual minimization, simulated annealing and a
//! Nelder–Mead simplex.
//!
//! [`LpSystem`] holds Φ(λ) = Σ_j w_j |c_j − (Aλ)_j|^p, the discretized form of
//! ‖f_t − Σ λᵢ f_{tᵢ}‖_p^p used by all stable predictors.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stable::signed_pow;

const STALL_WINDOW: usize = 8;

/// Objective Σ_j w_j |c_j − (Aλ)_j|^p over the distinct nonzero rows.
#[derive(Debug, Clone)]
pub struct LpSystem {
    n: usize,
    c: Vec<f64>,
    a: Vec<f64>,
    w: Vec<f64>,
    p: f64,
}

/// Result of a local minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct LpFit {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest normalized first-order residual, see [`LpSystem::gradient_residual`].
    pub gradient_residual: f64,
}

impl LpSystem {
    /// Rows (c_j, a_j1..a_jn) with masses w_j. Rows that vanish identically
    /// are dropped and repeated rows merged.
    pub fn new(c: &[f64], columns: &[&[f64]], w: &[f64], p: f64) -> Result<Self> {
        let n = columns.len();
        if columns.iter().any(|col| col.len() != c.len()) || w.len() != c.len() {
            return Err(Error::DimensionMismatch { expected: c.len(), got: w.len() });
        }
        if !(p > 0.0 && p <= 2.0) {
            return Err(Error::InvalidParameter(format!("exponent {p} outside (0, 2]")));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut sys = Self { n, c: Vec::new(), a: Vec::new(), w: Vec::new(), p };
        let mut row = vec![0.0; n + 1];
        for j in 0..c.len() {
            row[0] = c[j];
            for (i, col) in columns.iter().enumerate() {
                row[i + 1] = col[j];
            }
            if row.iter().all(|&v| v == 0.0) || w[j] == 0.0 {
                continue;
            }
            // +0.0 and -0.0 must hash alike
            let key: Vec<u64> = row.iter().map(|&v| (v + 0.0).to_bits()).collect();
            match index.get(&key) {
                Some(&k) => sys.w[k] += w[j],
                None => {
                    index.insert(key, sys.w.len());
                    sys.c.push(row[0]);
                    sys.a.extend_from_slice(&row[1..]);
                    sys.w.push(w[j]);
                }
            }
        }
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.w.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.w
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    /// Same rows with another exponent.
    pub fn with_exponent(&self, p: f64) -> Self {
        Self { p, ..self.clone() }
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.a[j * self.n..(j + 1) * self.n]
    }

    /// Residuals c − Aλ.
    pub fn residual(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|j| self.c[j] - self.row(j).iter().zip(lambda).map(|(a, l)| a * l).sum::<f64>())
            .collect()
    }

    /// (Aλ)_j.
    pub fn combination(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|j| self.row(j).iter().zip(lambda).map(|(a, l)| a * l).sum::<f64>())
            .collect()
    }

    /// Σ w |v|^p for a row vector v.
    pub fn pow_sum(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(&self.w)
            .map(|(&x, &w)| if x == 0.0 { 0.0 } else { w * x.abs().powf(self.p) })
            .sum()
    }

    /// Σ w u v^{<p−1>}.
    pub fn covariation(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.w)
            .map(|((&x, &y), &w)| if x == 0.0 { 0.0 } else { w * x * signed_pow(y, self.p - 1.0) })
            .sum()
    }

    /// Φ(λ).
    pub fn objective(&self, lambda: &[f64]) -> f64 {
        self.pow_sum(&self.residual(lambda))
    }

    /// Φ(λ)^{1/p}: the scale of the prediction error.
    pub fn scale(&self, lambda: &[f64]) -> f64 {
        self.objective(lambda).powf(1.0 / self.p)
    }

    /// Φ(0) = ‖c‖_p^p.
    pub fn target_pow(&self) -> f64 {
        self.pow_sum(&self.c)
    }

    /// Column i of A.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows()).map(|j| self.a[j * self.n + i]).collect()
    }

    /// The target row vector c.
    pub fn target(&self) -> &[f64] {
        &self.c
    }

    /// max_i |Σ_j w a_ji r_j^{<p−1>}| / (‖a_i‖_p ‖r‖_p^{p−1}), zero at an exact fit.
    pub fn gradient_residual(&self, lambda: &[f64]) -> f64 {
        let r = self.residual(lambda);
        let rn = self.pow_sum(&r);
        if rn == 0.0 {
            return 0.0;
        }
        let rs = rn.powf((self.p - 1.0) / self.p);
        (0..self.n)
            .map(|i| {
                let col = self.column(i);
                let an = self.pow_sum(&col).powf(1.0 / self.p);
                if an == 0.0 {
                    0.0
                } else {
                    self.covariation(&col, &r).abs() / (an * rs)
                }
            })
            .fold(0.0, f64::max)
    }

    fn gradient(&self, r: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.n);
        for (j, &rj) in r.iter().enumerate() {
            if rj == 0.0 {
                continue;
            }
            let s = -self.p * self.w[j] * signed_pow(rj, self.p - 1.0);
            for (i, a) in self.row(j).iter().enumerate() {
                g[i] += s * a;
            }
        }
        g
    }

    fn weighted_normal(&self, u: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for (j, &uj) in u.iter().enumerate() {
            if uj == 0.0 {
                continue;
            }
            let a = self.row(j);
            for i in 0..self.n {
                if a[i] == 0.0 {
                    continue;
                }
                let s = uj * a[i];
                for k in 0..=i {
                    h[(i, k)] += s * a[k];
                }
            }
        }
        h.fill_upper_triangle_with_lower_triangle();
        h
    }

    /// IRLS weights |r|^{p−2} with small residuals floored relative to the largest.
    fn irls_weights(&self, r: &[f64]) -> Vec<f64> {
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-10 * rmax).max(f64::MIN_POSITIVE.sqrt());
        r.iter()
            .zip(&self.w)
            .map(|(&x, &w)| w * x.abs().max(floor).powf(self.p - 2.0))
            .collect()
    }

    /// Minimizer of Σ u (c − Aλ)², through a pseudo-inverse of the normal matrix.
    fn weighted_least_squares(&self, u: &[f64]) -> Result<Vec<f64>> {
        let h = self.weighted_normal(u);
        let mut b = DVector::zeros(self.n);
        for (j, &uj) in u.iter().enumerate() {
            for (i, a) in self.row(j).iter().enumerate() {
                b[i] += uj * a * self.c[j];
            }
        }
        let scale = h.diagonal().max().max(f64::MIN_POSITIVE);
        let svd = h.svd(true, true);
        let x = svd.solve(&b, 1e-14 * scale).map_err(|_| Error::SingularProblem)?;
        Ok(x.iter().copied().collect())
    }

    /// Minimizer of the p = 2 objective regardless of the system's exponent.
    pub fn least_squares(&self) -> Result<Vec<f64>> {
        self.weighted_least_squares(&self.w)
    }

    /// Damped Newton descent on the convex objective for p ∈ (1, 2], with an
    /// IRLS (majorize–minimize) fallback step and Armijo backtracking.
    pub fn minimize_convex(&self, init: &[f64], max_iter: usize, gtol: f64) -> LpFit {
        debug_assert!(self.p > 1.0);
        let fref = self.target_pow();
        let mut lambda = init.to_vec();
        let mut r = self.residual(&lambda);
        let mut f = self.pow_sum(&r);
        let mut it = 0;
        let mut converged = false;
        if self.p == 2.0 {
            if let Ok(ls) = self.least_squares() {
                let fl = self.objective(&ls);
                if fl <= f {
                    lambda = ls;
                    f = fl;
                }
            }
            return self.fit(lambda, f, 1, true);
        }
        let exact = 1e-12f64.powf(self.p) * fref;
        let mut history: Vec<f64> = Vec::new();
        while it < max_iter {
            let gres = self.gradient_residual(&lambda);
            if f <= exact || fref == 0.0 || gres <= gtol {
                converged = true;
                break;
            }
            // objective flat to rounding over the last iterations
            history.push(f);
            if history.len() > STALL_WINDOW && history[history.len() - 1 - STALL_WINDOW] - f <= 1e-14 * f {
                converged = true;
                break;
            }
            it += 1;
            let g = self.gradient(&r);
            let u = self.irls_weights(&r);
            let base = self.weighted_normal(&u);
            let mut moved = false;
            for curvature in [self.p * (self.p - 1.0), self.p] {
                let h = &base * curvature;
                let d = match h.clone().cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => match h.svd(true, true).solve(&(-&g), 1e-14) {
                        Ok(d) => d,
                        Err(_) => continue,
                    },
                };
                let slope = g.dot(&d);
                if !(slope < 0.0) {
                    continue;
                }
                let dv: Vec<f64> = d.iter().copied().collect();
                let q = self.combination(&dv);
                let t = self.line_minimum(&r, &q);
                if !(t > 0.0) {
                    continue;
                }
                let trial: Vec<f64> = lambda.iter().zip(&dv).map(|(l, di)| l + t * di).collect();
                let rt = self.residual(&trial);
                let ft = self.pow_sum(&rt);
                // below rounding the objective cannot rank points, so the gradient does
                let accept = ft < f || (ft <= f * (1.0 + 1e-14) && self.gradient_residual(&trial) < gres);
                if accept {
                    let step = trial.iter().zip(&lambda).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    lambda = trial;
                    r = rt;
                    f = ft;
                    moved = step > 0.0;
                }
                if moved {
                    break;
                }
            }
            if !moved {
                // near p = 1 the Newton model can fail where the majorizer still descends
                if let Ok(mm) = self.weighted_least_squares(&u) {
                    let dv: Vec<f64> = mm.iter().zip(&lambda).map(|(a, b)| a - b).collect();
                    let t = self.line_minimum(&r, &self.combination(&dv));
                    let trial: Vec<f64> = lambda.iter().zip(&dv).map(|(l, di)| l + t * di).collect();
                    let rt = self.residual(&trial);
                    let ft = self.pow_sum(&rt);
                    if t > 0.0 && ft < f {
                        lambda = trial;
                        r = rt;
                        f = ft;
                        moved = true;
                    }
                }
            }
            if !moved {
                // stationary to machine precision
                converged = true;
                break;
            }
        }
        self.fit(lambda, f, it, converged)
    }

    /// Minimizer over t ≥ 0 of Σ w |r − t q|^p, by bisection on the derivative.
    fn line_minimum(&self, r: &[f64], q: &[f64]) -> f64 {
        let dphi = |t: f64| -> f64 {
            r.iter()
                .zip(q)
                .zip(&self.w)
                .map(|((&rj, &qj), &w)| {
                    let e = rj - t * qj;
                    -w * e.signum() * e.abs().powf(self.p - 1.0) * qj
                })
                .sum()
        };
        if !(dphi(0.0) < 0.0) {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while dphi(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return hi;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dphi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn fit(&self, weights: Vec<f64>, objective: f64, iterations: usize, converged: bool) -> LpFit {
        let gradient_residual = self.gradient_residual(&weights);
        LpFit { weights, objective, iterations, converged, gradient_residual }
    }

    /// Majorize–minimize iterations, valid for every p ∈ (0, 2]; objective
    /// never increases.
    pub fn polish(&self, init: &[f64], max_iter: usize) -> Vec<f64> {
        let mut lambda = init.to_vec();
        let mut f = self.objective(&lambda);
        for _ in 0..max_iter {
            let r = self.residual(&lambda);
            let u = self.irls_weights(&r);
            let Ok(next) = self.weighted_least_squares(&u) else { break };
            let fn_ = self.objective(&next);
            if !(fn_ < f) {
                break;
            }
            let rel = (f - fn_) / f.max(f64::MIN_POSITIVE);
            lambda = next;
            f = fn_;
            if rel < 1e-14 {
                break;
            }
        }
        lambda
    }

    /// Vertex of the residual hyperplane arrangement nearest to λ: the n
    /// independent rows with smallest normalized residual are made exact.
    pub fn vertex_near(&self, lambda: &[f64]) -> Option<Vec<f64>> {
        let r = self.residual(lambda);
        let mut order: Vec<(f64, usize)> = (0..self.rows())
            .filter_map(|j| {
                let an = self.row(j).iter().map(|a| a * a).sum::<f64>().sqrt();
                (an > 0.0).then(|| (r[j].abs() / an, j))
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut chosen = Vec::new();
        for &(_, j) in &order {
            let a = DVector::from_column_slice(self.row(j));
            let mut v = a.clone();
            for q in &basis {
                v -= q * q.dot(&a);
            }
            let nv = v.norm();
            if nv > 1e-9 * a.norm() {
                basis.push(v / nv);
                chosen.push(j);
                if chosen.len() == self.n {
                    break;
                }
            }
        }
        if chosen.len() < self.n {
            return None;
        }
        let m = DMatrix::from_fn(self.n, self.n, |k, i| self.row(chosen[k])[i]);
        let rhs = DVector::from_iterator(self.n, chosen.iter().map(|&j| self.c[j]));
        m.lu().solve(&rhs).map(|x| x.iter().copied().collect())
    }

    /// Simulated annealing by single-coordinate moves, returning the best
    /// state visited. A share of the moves jumps onto a residual hyperplane.
    pub fn anneal(&self, start: &[f64], cfg: &AnnealConfig, rng: &mut Rng) -> Vec<f64> {
        let n = self.n;
        if n == 0 || self.rows() == 0 {
            return start.to_vec();
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for j in 0..self.rows() {
            for (i, &a) in self.row(j).iter().enumerate() {
                if a != 0.0 {
                    cols[i].push((j, a));
                }
            }
        }
        let mut lambda = start.to_vec();
        let mut r = self.residual(&lambda);
        let mut f = self.pow_sum(&r);
        let mut best = (f, lambda.clone());
        let f0 = f.max(self.target_pow()).max(f64::MIN_POSITIVE);
        let mut temp = cfg.initial_temperature * f0;
        let t0 = temp;
        let spread = 1.0 + start.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pw = |x: f64| if x == 0.0 { 0.0 } else { x.abs().powf(self.p) };
        for k in 0..cfg.proposals {
            let i = rng.gen_range(0..n);
            if cols[i].is_empty() {
                continue;
            }
            let delta = if rng.gen::<f64>() < cfg.snap_probability {
                let (j, a) = cols[i][rng.gen_range(0..cols[i].len())];
                r[j] / a
            } else {
                let z: f64 = StandardNormal.sample(rng);
                z * spread * (temp / t0).sqrt().max(1e-3)
            };
            let mut df = 0.0;
            for &(j, a) in &cols[i] {
                df += self.w[j] * (pw(r[j] - delta * a) - pw(r[j]));
            }
            if df <= 0.0 || rng.gen::<f64>() < (-df / temp).exp() {
                lambda[i] += delta;
                for &(j, a) in &cols[i] {
                    r[j] -= delta * a;
                }
                f += df;
                if f < best.0 {
                    // refresh to shed accumulated rounding
                    r = self.residual(&lambda);
                    f = self.pow_sum(&r);
                    if f < best.0 {
                        best = (f, lambda.clone());
                    }
                }
            }
            if (k + 1) % cfg.cooling_interval == 0 {
                temp *= cfg.cooling;
            }
        }
        best.1
    }
}

/// Annealing schedule: geometric cooling every `cooling_interval` proposals,
/// starting from `initial_temperature` times the starting objective.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealConfig {
    pub starts: usize,
    pub proposals: usize,
    pub cooling: f64,
    pub cooling_interval: usize,
    pub initial_temperature: f64,
    pub snap_probability: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            proposals: 20_000,
            cooling: 0.95,
            cooling_interval: 100,
            initial_temperature: 0.05,
            snap_probability: 0.2,
        }
    }
}

/// Outcome of a simplex search.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead minimization from `x0` with initial simplex edge `step`.
/// Stops when the spread of simplex values falls below `ftol`·(|f_best| + ftol).
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_iter: usize, ftol: f64) -> SimplexResult {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i] != 0.0 { step * x[i].abs().max(1.0) } else { step };
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut it = 0;
    let mut converged = false;
    while it < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[n].1);
        if (hi - lo).abs() <= ftol * (lo.abs() + ftol) {
            converged = true;
            break;
        }
        it += 1;
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|s| s.0[k]).sum::<f64>() / n as f64).collect();
        let towards = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (w - c)).collect() };
        let xr = towards(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = towards(-2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = towards(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = towards(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = best.iter().zip(&s.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    s.1 = eval(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    SimplexResult { x, value, iterations: it, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn interval_system(p: f64) -> LpSystem {
        // ¼(1 + |1−λ|^p + |λ|^p) as three rows of mass ¼
        LpSystem::new(&[1.0, 1.0, 0.0], &[&[0.0, 1.0, 1.0]], &[0.25; 3], p).unwrap()
    }

    #[test]
    fn rows_merge() {
        let s = LpSystem::new(&[1.0, 1.0, 0.0, 0.0], &[&[2.0, 2.0, 0.0, 1.0]], &[0.5, 0.25, 1.0, 1.0], 1.5).unwrap();
        assert_eq!(s.rows(), 2);
        assert_eq!(s.objective(&[0.5]), 0.75 * 0.0 + 0.5f64.powf(1.5));
    }

    #[test]
    fn convex_minimum_of_interval_example() {
        for p in [1.2, 1.5, 1.9, 2.0] {
            let s = interval_system(p);
            let fit = s.minimize_convex(&[0.9], 200, 1e-12);
            assert!(fit.converged);
            assert!((fit.weights[0] - 0.5).abs() < 1e-9, "{p}: {:?}", fit.weights);
        }
    }

    #[test]
    fn exact_fit_stops_immediately() {
        let s = LpSystem::new(&[1.0, 2.0, 0.0], &[&[1.0, 2.0, 0.0], &[0.0, 1.0, 1.0]], &[1.0; 3], 1.3).unwrap();
        let fit = s.minimize_convex(&[1.0, 0.0], 50, 1e-10);
        assert_eq!(fit.iterations, 0);
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let c = [1.0, 2.0, 0.5, -1.0];
        let a1 = [1.0, 0.0, 1.0, 2.0];
        let a2 = [0.0, 1.0, 1.0, -1.0];
        let s = LpSystem::new(&c, &[&a1, &a2], &[1.0, 2.0, 1.0, 0.5], 2.0).unwrap();
        let x = s.least_squares().unwrap();
        let g = s.gradient(&s.residual(&x));
        assert!(g.amax() < 1e-12);
    }

    #[test]
    fn vertices_and_annealing() {
        let s = interval_system(0.7);
        assert_eq!(s.vertex_near(&[0.9]).unwrap(), vec![1.0]);
        assert_eq!(s.vertex_near(&[0.2]).unwrap(), vec![0.0]);
        let mut r = rng::stream(3, 0);
        let best = s.anneal(&[0.4], &AnnealConfig::default(), &mut r);
        let v = s.vertex_near(&best).unwrap();
        assert!(v == vec![0.0] || v == vec![1.0]);
    }

    #[test]
    fn polish_never_increases() {
        let s = interval_system(0.5);
        for x0 in [-0.7, 0.3, 0.6, 1.8] {
            let x = s.polish(&[x0], 100);
            assert!(s.objective(&x) <= s.objective(&[x0]));
        }
    }

    #[test]
    fn simplex_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], 0.5, 5000, 1e-16);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }
}
