//! Special functions: Gamma family, cylinder Bessel functions, Gauss-Legendre rules.

use once_cell::sync::Lazy;
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(x: f64) -> f64 {
    let mut s = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        s += c / (x + i as f64);
    }
    s
}

/// Gamma function for real arguments (poles return infinity).
pub fn gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    if x > 171.7 {
        return f64::INFINITY;
    }
    let xm = x - 1.0;
    let t = xm + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(xm + 0.5) * (-t).exp() * lanczos_sum(xm)
}

/// Natural log of |Gamma(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    if x < 0.5 {
        return (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x);
    }
    let xm = x - 1.0;
    let t = xm + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (xm + 0.5) * t.ln() - t + lanczos_sum(xm).ln()
}

/// Reciprocal Gamma, entire; zero at the non-positive integers.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    1.0 / gamma(x)
}

/// Digamma function psi(x) = Gamma'(x)/Gamma(x).
pub fn digamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::NAN;
    }
    if x < 0.0 {
        return digamma(1.0 - x) - PI / (PI * x).tan();
    }
    let mut v = x;
    let mut acc = 0.0;
    while v < 10.0 {
        acc -= 1.0 / v;
        v += 1.0;
    }
    let w = 1.0 / (v * v);
    let series = w
        * (-1.0 / 12.0
            + w * (1.0 / 120.0
                + w * (-1.0 / 252.0
                    + w * (1.0 / 240.0
                        + w * (-1.0 / 132.0 + w * (691.0 / 32760.0 + w * (-1.0 / 12.0)))))));
    acc + v.ln() - 0.5 / v + series
}

/// Trigamma function psi'(x).
pub fn trigamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::NAN;
    }
    if x < 0.0 {
        let s = (PI * x).sin();
        return -trigamma(1.0 - x) + PI * PI / (s * s);
    }
    let mut v = x;
    let mut acc = 0.0;
    while v < 10.0 {
        acc += 1.0 / (v * v);
        v += 1.0;
    }
    let w = 1.0 / (v * v);
    let tail = (1.0 / v)
        * (1.0
            + 0.5 / v
            + w * (1.0 / 6.0
                + w * (-1.0 / 30.0
                    + w * (1.0 / 42.0
                        + w * (-1.0 / 30.0 + w * (5.0 / 66.0 + w * (-691.0 / 2730.0 + w * (7.0 / 6.0))))))));
    acc + tail
}

/// Surface area of the unit sphere in R^d.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// `z^{-nu} J_nu(z)` for `nu >= -1/2`, an entire function of z.
///
/// Half-integer orders use elementary closed forms; other orders switch from the
/// power series to the Hankel expansion at moderate z.
pub fn bessel_lambda(nu: f64, z: f64) -> f64 {
    let z = z.abs();
    let twice = 2.0 * nu;
    if (twice - twice.round()).abs() < 1e-14 && (twice.round() as i64) % 2 != 0 {
        return half_integer_lambda(twice.round() as i64, z);
    }
    if z < 17.0 {
        lambda_series(nu, z)
    } else {
        hankel_j(nu, z) * z.powf(-nu)
    }
}

fn lambda_series(nu: f64, z: f64) -> f64 {
    let q = -0.25 * z * z;
    let mut term = 2f64.powf(-nu) * rgamma(nu + 1.0);
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) || k > 300.0 {
            break;
        }
        k += 1.0;
    }
    sum
}

fn hankel_j(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut k = 1.0;
    let mut last = f64::INFINITY;
    loop {
        let odd = 2.0 * k - 1.0;
        term *= (mu - odd * odd) / (k * 8.0 * z);
        if term.abs() > last || term.abs() < 1e-18 || k > 60.0 {
            break;
        }
        last = term.abs();
        match (k as i64) % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        k += 1.0;
    }
    let chi = z - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `z^{-n-1/2} J_{n+1/2}(z)` written through the spherical Bessel function j_n.
fn half_integer_lambda(twice_nu: i64, z: f64) -> f64 {
    let c = (2.0 / PI).sqrt();
    if twice_nu == -1 {
        return c * z.cos();
    }
    let n = ((twice_nu - 1) / 2) as i32;
    if z < 1e-300 {
        return c / double_factorial(2 * n + 1);
    }
    if z < (n as f64 + 2.0) {
        // j_n(z)/z^n by its power series
        let q = -0.5 * z * z;
        let mut term = 1.0 / double_factorial(2 * n + 1);
        let mut sum = term;
        let mut k = 1.0;
        loop {
            term *= q / (k * (2.0 * (n as f64 + k) + 1.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs() || k > 200.0 {
                break;
            }
            k += 1.0;
        }
        return c * sum;
    }
    let (s, co) = z.sin_cos();
    let mut jm = s / z;
    if n == 0 {
        return c * jm;
    }
    let mut j = s / (z * z) - co / z;
    for k in 1..n {
        let next = (2 * k + 1) as f64 / z * j - jm;
        jm = j;
        j = next;
    }
    c * j / z.powi(n)
}

fn double_factorial(m: i32) -> f64 {
    let mut r = 1.0;
    let mut k = m;
    while k > 1 {
        r *= k as f64;
        k -= 2;
    }
    r
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
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
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// A Gauss-Legendre rule cached for reuse.
pub struct GaussRule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        GaussRule { x, w }
    }

    /// Integrates `f` over `[a, b]`.
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut s = 0.0;
        for (xi, wi) in self.x.iter().zip(&self.w) {
            s += wi * f(c + h * xi);
        }
        s * h
    }

    /// Mapped nodes and weights on `[a, b]`.
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.x.iter().zip(&self.w).map(move |(xi, wi)| (c + h * xi, wi * h))
    }
}

pub static GL4: Lazy<GaussRule> = Lazy::new(|| GaussRule::new(4));
pub static GL6: Lazy<GaussRule> = Lazy::new(|| GaussRule::new(6));
pub static GL8: Lazy<GaussRule> = Lazy::new(|| GaussRule::new(8));
pub static GL12: Lazy<GaussRule> = Lazy::new(|| GaussRule::new(12));
pub static GL20: Lazy<GaussRule> = Lazy::new(|| GaussRule::new(20));
