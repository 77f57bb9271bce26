//! Bessel functions J_ν and K_ν.

use std::f64::consts::PI;
use std::sync::OnceLock;

const EPS: f64 = 1e-16;

/// Taylor coefficients of 1/Γ(z) = Σ c_k z^k, k = 1..26.
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
];

/// Temme's auxiliary values for |mu| <= 1/2:
/// (gam1, gam2, 1/Γ(1+mu), 1/Γ(1-mu)).
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pw = 1.0;
    for k in (0..RECIP_GAMMA.len()).step_by(2) {
        gam2 += RECIP_GAMMA[k] * pw;
        gam1 -= RECIP_GAMMA[k + 1] * pw;
        pw *= mu2;
    }
    // 1/Γ(1±mu) = gam2 ∓ mu·gam1
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// Modified Bessel function of the second kind K_ν(x), x > 0.
///
/// Temme's series for x < 2, Steed's continued fraction otherwise, then
/// forward recurrence in the order.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k requires x > 0");
    let nu = nu.abs();
    let nl = (nu + 0.5).floor() as usize;
    let xmu = nu - nl as f64;
    let xmu2 = xmu * xmu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;
    let (mut rkmu, mut rk1);
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * xmu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = xmu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(xmu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let e = e.exp();
        let mut p = 0.5 * e / gampl;
        let mut q = 0.5 / (e * gammi);
        let mut c = 1.0;
        let d = x2 * x2;
        let mut sum1 = p;
        for i in 1..500 {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - xmu2);
            c *= d / fi;
            p /= fi - xmu;
            q /= fi + xmu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        rkmu = sum;
        rk1 = sum1 * xi2;
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - xmu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..2000 {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh *= b * d - 1.0;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        rkmu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi;
    }
    for i in 1..=nl {
        let next = (xmu + i as f64) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = next;
    }
    rkmu
}

/// Normalized Bessel function Γ(ν+1)(2/r)^ν J_ν(r), equal to 1 at r = 0.
///
/// This is the shape of the Bessel covariance family. Requires ν > -1.
pub fn bessel_j_normalized(nu: f64, r: f64) -> f64 {
    let r = r.abs();
    if r == 0.0 {
        return 1.0;
    }
    if r <= 12.0 {
        let q = -0.25 * r * r;
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..200 {
            let fj = j as f64;
            term *= q / (fj * (nu + fj));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) && fj > 0.5 * r {
                break;
            }
        }
        sum
    } else {
        statrs::function::gamma::gamma(nu + 1.0) * (2.0 / r).powf(nu) * bessel_j(nu, r)
    }
}

/// Bessel function of the first kind J_ν(r) for ν > -1, r ≥ 0.
pub fn bessel_j(nu: f64, r: f64) -> f64 {
    assert!(r >= 0.0, "bessel_j requires r >= 0");
    if r == 0.0 {
        return if nu == 0.0 {
            1.0
        } else if nu > 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    if r <= 12.0 {
        let lead = (0.5 * r).powf(nu) / statrs::function::gamma::gamma(nu + 1.0);
        lead * bessel_j_normalized(nu, r)
    } else if r <= 50.0 {
        bessel_j_schlafli(nu, r)
    } else {
        bessel_j_hankel(nu, r)
    }
}

/// Schläfli's integral, evaluated by composite Gauss–Legendre quadrature.
fn bessel_j_schlafli(nu: f64, x: f64) -> f64 {
    let panels = (x.ceil() as usize).max(8);
    let first = gauss_legendre_composite(0.0, PI, panels, |t| (nu * t - x * t.sin()).cos()) / PI;
    let s = (nu * PI).sin();
    if s.abs() < 1e-300 {
        return first;
    }
    // integrand e^{-x sinh u - ν u}, negligible once x sinh u exceeds 50 + |ν|u
    let mut upper = 1.0;
    while x * f64::sinh(upper) - nu * upper < 60.0 {
        upper *= 1.5;
    }
    let second = gauss_legendre_composite(0.0, upper, 64, |u| (-x * u.sinh() - nu * u).exp());
    first - s / PI * second
}

/// Hankel's asymptotic expansion for large arguments.
fn bessel_j_hankel(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let z = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * z);
        if term.abs() >= prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

fn gauss_legendre_nodes() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| legendre_rule(20))
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub(crate) fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        out.push((z, 2.0 / ((1.0 - z * z) * dp * dp)));
    }
    out
}

fn gauss_legendre_composite(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let nodes = gauss_legendre_nodes();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let mut s = 0.0;
        for &(z, w) in nodes {
            s += w * f(mid + 0.5 * h * z);
        }
        total += 0.5 * h * s;
    }
    total
}

/// x^ν K_ν(x), continued to its limit 2^{ν-1}Γ(ν) at x = 0.
pub fn scaled_bessel_k(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 2f64.powf(nu - 1.0) * statrs::function::gamma::gamma(nu);
    }
    if x > 745.0 {
        return 0.0;
    }
    x.powf(nu) * bessel_k(nu, x)
}
