//! Monte-Carlo checks of the field simulators.

use rand::Rng as _;
use stablegeo::covariance::{CovFamily, CovModel};
use stablegeo::grid::GridSpec;
use stablegeo::rng;
use stablegeo::simulate::{gaussian_sim, shot_noise_sites, GaussianSimulator, SubGaussianSimulator};
use stablegeo::stable::{char_fn, StableParams};

fn wm() -> CovModel {
    CovModel::new(CovFamily::WhittleMatern { a: 2.0, b: 1.0, nu: 1.0 }, 2).unwrap()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn white_noise_has_no_lag_correlation() {
    let m = CovModel::new(CovFamily::WhiteNoise { sigma2: 1.0 }, 1).unwrap();
    let grid = GridSpec::from_bounds(&[0.0], &[9.0], &[10]).unwrap();
    let sim = GaussianSimulator::new(&m, &grid.sites()).unwrap();
    let mut r = rng::stream(1, 0);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for _ in 0..10_000 {
        let x = sim.draw(&mut r);
        sxy += x[4] * x[5];
        sxx += x[4] * x[4];
        syy += x[5] * x[5];
    }
    let rho = sxy / (sxx * syy).sqrt();
    assert!(rho.abs() < 0.03, "{rho}");
}

#[test]
fn whittle_matern_site_variance() {
    let grid = GridSpec::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[3, 3]).unwrap();
    let sim = GaussianSimulator::new(&wm(), &grid.sites()).unwrap();
    let mut r = rng::stream(2, 0);
    let x: Vec<f64> = (0..10_000).map(|_| sim.draw(&mut r)[4]).collect();
    let (_, v) = mean_var(&x);
    assert!((v - 1.0).abs() < 0.05, "{v}");
}

#[test]
fn brownian_field_vanishes_at_origin() {
    let m = CovModel::new(CovFamily::FractionalBrownian { h: 0.5 }, 1).unwrap();
    let grid = GridSpec::from_bounds(&[0.0], &[1.0], &[21]).unwrap();
    let x: Vec<f64> = (0..200).map(|s| gaussian_sim(&m, &grid, s).unwrap().values[0]).collect();
    let (_, v) = mean_var(&x);
    assert!(v < 1e-20);
}

#[test]
fn subgaussian_marginal_char_fn() {
    let alpha = 1.2;
    let sites = vec![vec![0.0, 0.0], vec![0.5, 0.0]];
    let sim = SubGaussianSimulator::new(&wm(), alpha, &sites).unwrap();
    let (mut g, mut a) = (rng::stream(3, 0), rng::stream(3, 1));
    let mut x = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        let d = sim.realize_from(&mut g, &mut a);
        assert!(d.mixing > 0.0);
        x.push(d.values[0]);
    }
    let law = StableParams::new(alpha, 0.5f64.sqrt(), 0.0, 0.0).unwrap();
    for th in [0.5, 1.0, 2.0] {
        let emp = x.iter().map(|v| (th * v).cos()).sum::<f64>() / x.len() as f64;
        assert!((emp - char_fn(&law, th).re).abs() < 0.02, "theta {th}: {emp}");
    }
}

#[test]
fn stationary_mean_and_variance() {
    let grid = GridSpec::from_bounds(&[0.0, 0.0], &[2.0, 2.0], &[5, 5]).unwrap();
    let sim = GaussianSimulator::new(&wm(), &grid.sites()).unwrap();
    let mut r = rng::stream(4, 0);
    let n = 20_000;
    let draws: Vec<Vec<f64>> = (0..n).map(|_| sim.draw(&mut r)).collect();
    for k in [0, 6, 12, 18, 24] {
        let x: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let (m, v) = mean_var(&x);
        let se_mean = (v / n as f64).sqrt();
        // Gaussian: Var(s²) = 2σ⁴/(n−1)
        let se_var = (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(m.abs() < 3.0 * se_mean, "site {k}: mean {m}");
        assert!((v - 1.0).abs() < 3.0 * se_var, "site {k}: var {v}");
    }
}

#[test]
fn subgaussian_is_not_ergodic() {
    let grid = GridSpec::from_bounds(&[0.0, 0.0], &[5.0, 5.0], &[10, 10]).unwrap();
    let sim = SubGaussianSimulator::new(&wm(), 1.2, &grid.sites()).unwrap();
    let spatial_var = |v: &[f64]| mean_var(v).1;
    let dispersion = |x: &[f64]| {
        let (m, v) = mean_var(x);
        v.sqrt() / m
    };
    let (mut g, mut a) = (rng::stream(5, 0), rng::stream(5, 1));
    let mut gauss = Vec::new();
    let mut sub = Vec::new();
    for _ in 0..2000 {
        let d = sim.realize_from(&mut g, &mut a);
        sub.push(spatial_var(&d.values));
        let s = d.mixing.sqrt();
        gauss.push(spatial_var(&d.values.iter().map(|v| v / s).collect::<Vec<_>>()));
    }
    let ratio = dispersion(&sub) / dispersion(&gauss);
    assert!(ratio >= 5.0, "{ratio}");
}

fn cap_kernel(x: &[f64]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 <= 4.0 {
        (1.0 - 0.25 * r2) / (2.0 * std::f64::consts::PI)
    } else {
        0.0
    }
}

/// λ∫f(h + x) f(x) dx by the midpoint rule.
fn convolution(h: f64, cells: usize) -> f64 {
    let dx = 4.0 / cells as f64;
    let mut s = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            let x = [-2.0 + (i as f64 + 0.5) * dx, -2.0 + (j as f64 + 0.5) * dx];
            s += cap_kernel(&x) * cap_kernel(&[x[0] + h, x[1]]);
        }
    }
    s * dx * dx
}

#[test]
fn shot_noise_mean_and_covariance() {
    let sites = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
    let n = 10_000;
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|s| shot_noise_sites(1.0, &cap_kernel, 2.0, &[0.0, 0.0], &[1.0, 0.0], &sites, s).unwrap())
        .collect();
    let x0: Vec<f64> = draws.iter().map(|d| d[0]).collect();
    let x1: Vec<f64> = draws.iter().map(|d| d[1]).collect();
    let (m0, v0) = mean_var(&x0);
    // λ∫f = 1
    assert!((m0 - 1.0).abs() < 3.0 * (v0 / n as f64).sqrt(), "{m0}");
    let (m1, _) = mean_var(&x1);
    for (h, other, m_other) in [(0.0, &x0, m0), (1.0, &x1, m1)] {
        let prods: Vec<f64> = x0.iter().zip(other.iter()).map(|(a, b)| (a - m0) * (b - m_other)).collect();
        let (c, vc) = mean_var(&prods);
        let oracle = convolution(h, 800);
        assert!((c - oracle).abs() < 3.0 * (vc / n as f64).sqrt(), "h {h}: {c} vs {oracle}");
    }
}

#[test]
fn same_seed_is_bit_exact() {
    let mut r = rng::stream(6, 0);
    let grid = GridSpec::from_bounds(&[0.0, 0.0], &[1.0, 1.0], &[4, 4]).unwrap();
    for _ in 0..5 {
        let seed: u64 = r.gen();
        assert_eq!(gaussian_sim(&wm(), &grid, seed).unwrap().values, gaussian_sim(&wm(), &grid, seed).unwrap().values);
    }
}
