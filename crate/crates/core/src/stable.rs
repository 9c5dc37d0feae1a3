//! Isotropic alpha-stable heat kernel: Fourier-Bessel quadrature, tail series and a fast table.
//!
//! The radial density at unit time is
//! `p_1(r) = (2 pi)^{-d/2} int_0^inf exp(-s^a) s^{d-1} L(s r) ds` with `L(z) = z^{-nu} J_nu(z)`,
//! `nu = d/2 - 1`. For large `r` the Mellin-Barnes series
//! `p_1(r) = pi^{-d/2-1} sum_k (-1)^{k+1}/k! 2^{ka} G(ka/2+1) G((ka+d)/2) sin(k pi a/2) r^{-ka-d}`
//! is used; it converges for `a < 1` and is asymptotic otherwise.

use crate::constants::riesz_constant;
use crate::error::{domain, Result};
use crate::special::{bessel_lambda, gamma, ln_gamma, sphere_area, GaussRule, GL12, GL8};
use once_cell::sync::Lazy;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

const TABLE_R_MIN: f64 = 1e-4;
const TABLE_PER_DECADE: f64 = 200.0;

/// Default crossover radius between quadrature and tail series.
pub const DEFAULT_CROSSOVER: f64 = 8.0;

/// Evaluator for the free kernel in dimension `d` with index `alpha`.
pub struct StableKernel {
    pub d: usize,
    pub alpha: f64,
    pub crossover: f64,
    p0: f64,
    series: Vec<f64>,
    ln_r0: f64,
    h: f64,
    ln_p: Vec<f64>,
    m2: Vec<f64>,
    ln_p_lo: f64,
}

static CACHE: Lazy<Mutex<HashMap<(usize, u64, u64), Arc<StableKernel>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

impl StableKernel {
    /// Shared evaluator with the default crossover.
    pub fn shared(d: usize, alpha: f64) -> Result<Arc<StableKernel>> {
        Self::shared_with(d, alpha, DEFAULT_CROSSOVER)
    }

    pub fn shared_with(d: usize, alpha: f64, crossover: f64) -> Result<Arc<StableKernel>> {
        let key = (d, alpha.to_bits(), crossover.to_bits());
        if let Some(k) = CACHE.lock().unwrap().get(&key) {
            return Ok(k.clone());
        }
        let k = Arc::new(StableKernel::new(d, alpha, crossover)?);
        CACHE.lock().unwrap().insert(key, k.clone());
        Ok(k)
    }

    pub fn new(d: usize, alpha: f64, crossover: f64) -> Result<StableKernel> {
        if d == 0 || !(alpha > 0.0 && alpha < 2.0) {
            return domain(format!("invalid stable parameters d={d}, alpha={alpha}"));
        }
        if !(crossover > 1.0) {
            return domain("crossover radius must exceed 1");
        }
        let df = d as f64;
        let p0 = sphere_area(d) * (2.0 * PI).powf(-df) * gamma(df / alpha) / alpha;
        let series = series_coefficients(d, alpha, crossover);
        let mut k = StableKernel {
            d,
            alpha,
            crossover,
            p0,
            series,
            ln_r0: TABLE_R_MIN.ln(),
            h: 10f64.ln() / TABLE_PER_DECADE,
            ln_p: Vec::new(),
            m2: Vec::new(),
            ln_p_lo: 0.0,
        };
        let ln_hi = (1.5 * crossover).ln();
        let n = ((ln_hi - k.ln_r0) / k.h).ceil() as usize + 1;
        let ln_p: Vec<f64> = (0..n)
            .map(|i| {
                let r = (k.ln_r0 + i as f64 * k.h).exp();
                k.p1_exact(r).ln()
            })
            .collect();
        k.m2 = natural_spline(&ln_p, k.h);
        k.ln_p_lo = ln_p[0];
        k.ln_p = ln_p;
        Ok(k)
    }

    /// `p_1(0) = omega_{d-1} (2 pi)^{-d} G(d/a) / a`.
    pub fn p1_origin(&self) -> f64 {
        self.p0
    }

    /// Accurate evaluation by quadrature below the crossover and the tail series above.
    pub fn p1_exact(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.crossover {
            self.tail_series(r)
        } else {
            self.fourier_bessel(r)
        }
    }

    /// Full tail series at `r` (valid for `r` at or beyond the crossover).
    pub fn tail_series(&self, r: f64) -> f64 {
        let y = r.powf(-self.alpha);
        let mut s = 0.0;
        for c in self.series.iter().rev() {
            s = s * y + c;
        }
        s * y * r.powf(-(self.d as f64))
    }

    /// Leading tail term, the Levy density.
    pub fn levy_density(&self, r: f64) -> Result<f64> {
        levy_density(self.d, self.alpha, r)
    }

    /// Radial Fourier-Bessel integral with Euler-accelerated half-period panels.
    pub fn fourier_bessel(&self, r: f64) -> f64 {
        let d = self.d;
        let a = self.alpha;
        if r == 0.0 {
            return self.p0;
        }
        let nu = 0.5 * d as f64 - 1.0;
        let norm = (2.0 * PI).powf(-0.5 * d as f64);
        let f = |s: f64| (-s.powf(a)).exp() * s.powi(d as i32 - 1) * bessel_lambda(nu, s * r);
        let mut s_cut = 60f64.powf(1.0 / a);
        for _ in 0..4 {
            s_cut = (60.0 + (d as f64 - 1.0) * s_cut.ln().max(0.0)).powf(1.0 / a);
        }
        let zero = |k: usize| (k as f64 + 0.5 * nu - 0.25) * PI / r;
        let first = zero(1).min(s_cut);
        let mut total = dyadic_to_zero(&GL8, first, 48, &f);
        if first >= s_cut {
            return norm * total;
        }
        let mut partial: Vec<f64> = vec![total];
        let mut last_est = f64::NAN;
        let mut hits = 0;
        let mut k = 1;
        loop {
            let (lo, hi) = (zero(k), zero(k + 1));
            if lo >= s_cut {
                return norm * total;
            }
            total += GL12.integrate(lo, hi.min(s_cut), &f);
            partial.push(total);
            k += 1;
            if partial.len() >= 8 {
                let m = partial.len().min(24);
                let est = euler_limit(&partial[partial.len() - m..]);
                if (est - last_est).abs() <= 1e-14 * est.abs().max(1e-300) {
                    hits += 1;
                    if hits >= 2 {
                        return norm * est;
                    }
                } else {
                    hits = 0;
                }
                last_est = est;
            }
            if k > 200_000 {
                return norm * last_est;
            }
        }
    }

    /// Fast evaluation of `p_1(r)` from the spline table and the tail series.
    #[inline]
    pub fn p1(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.crossover {
            return self.tail_series(r);
        }
        if r < TABLE_R_MIN {
            let t = r / TABLE_R_MIN;
            return self.p0 + (self.ln_p_lo.exp() - self.p0) * t * t;
        }
        self.spline(r.ln()).exp()
    }

    /// `ln p_1` as a function of `ln r`.
    #[inline]
    pub fn ln_p1_of_ln(&self, ln_r: f64) -> f64 {
        if ln_r < self.ln_r0 || ln_r >= self.crossover.ln() {
            return self.p1(ln_r.exp()).ln();
        }
        self.spline(ln_r)
    }

    #[inline]
    fn spline(&self, x: f64) -> f64 {
        let pos = (x - self.ln_r0) / self.h;
        let i = (pos.floor() as usize).min(self.ln_p.len() - 2);
        let t = pos - i as f64;
        let u = 1.0 - t;
        let h2 = self.h * self.h / 6.0;
        u * self.ln_p[i] + t * self.ln_p[i + 1] + h2 * ((u * u * u - u) * self.m2[i] + (t * t * t - t) * self.m2[i + 1])
    }

    /// Free kernel `p_t(r) = t^{-d/a} p_1(t^{-1/a} r)`.
    pub fn p_t(&self, t: f64, r: f64) -> Result<f64> {
        if !(t > 0.0) {
            return domain(format!("time t = {t} must be positive"));
        }
        Ok(self.density(t, r))
    }

    /// Unchecked fast `p_t(r)`.
    #[inline]
    pub fn density(&self, t: f64, r: f64) -> f64 {
        let s = t.powf(-1.0 / self.alpha);
        s.powi(self.d as i32) * self.p1(r * s)
    }

    /// Unchecked fast `p_t(r)` given `ln t`.
    #[inline]
    pub fn density_ln_t(&self, ln_t: f64, r: f64) -> f64 {
        let l = -ln_t / self.alpha;
        if r == 0.0 {
            return (self.d as f64 * l).exp() * self.p0;
        }
        (self.d as f64 * l + self.ln_p1_of_ln(r.abs().ln() + l)).exp()
    }

    /// `omega_{d-1} int_0^inf u^{m + d - 1} p_1(u) du` by quadrature plus the tail series
    /// (requires `-d < m < a`).
    pub fn radial_moment(&self, m: f64) -> f64 {
        let df = self.d as f64;
        let e = m + df - 1.0;
        let lo = 1e-14f64;
        let mut s = self.p0 * lo.powf(e + 1.0) / (e + 1.0);
        let mut b = lo;
        while b < self.crossover {
            let c = (2.0 * b).min(self.crossover);
            s += GL12.integrate(b, c, |u| u.powf(e) * self.p1_exact(u));
            b = c;
        }
        let rs = self.crossover;
        for (k, c) in self.series.iter().enumerate() {
            let p = (k + 1) as f64 * self.alpha - m;
            s += c * rs.powf(-p) / p;
        }
        sphere_area(self.d) * s
    }

    /// Total mass of `p_1`.
    pub fn mass(&self) -> f64 {
        self.radial_moment(0.0)
    }

    /// `int_0^inf p_t(r) dt / (A r^{a-d})` via `t = (r/u)^a`, which gives
    /// `a r^{a-d} int_0^inf u^{d-a-1} p_1(u) du`.
    pub fn riesz_potential_check(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return domain("radius must be positive");
        }
        let a = riesz_constant(self.d, self.alpha)?;
        let df = self.d as f64;
        let integral = self.alpha * self.radial_moment(-self.alpha) / sphere_area(self.d);
        let lhs = r.powf(self.alpha - df) * integral;
        Ok(lhs / (a * r.powf(self.alpha - df)))
    }

    /// Bounds of `p_1(r) / (1 ∧ r^{-d-a})` over the given radii.
    pub fn comparison_constant(&self, radii: &[f64]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for &r in radii {
            let c = 1f64.min(r.powf(-(self.d as f64) - self.alpha));
            let q = self.p1(r) / c;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        (lo, hi)
    }
}

/// Levy density `a 2^{a-1} G((d+a)/2) / (pi^{d/2} G(1-a/2)) r^{-d-a}`.
pub fn levy_density(d: usize, alpha: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return domain("radius must be positive");
    }
    let df = d as f64;
    let c = alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (df + alpha)) / (PI.powf(0.5 * df) * gamma(1.0 - 0.5 * alpha));
    Ok(c * r.powf(-df - alpha))
}

fn series_coefficients(d: usize, alpha: f64, r_star: f64) -> Vec<f64> {
    let df = d as f64;
    let ln_pre = -(0.5 * df + 1.0) * PI.ln();
    let mut out = Vec::new();
    let mut prev = f64::INFINITY;
    let mut small = 0;
    for k in 1..400 {
        let kf = k as f64;
        let ka = kf * alpha;
        let ln_mag = ln_pre + ka * 2f64.ln() + ln_gamma(0.5 * ka + 1.0) + ln_gamma(0.5 * (ka + df)) - ln_gamma(kf + 1.0);
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let c = sign * ln_mag.exp() * (0.5 * kf * PI * alpha).sin();
        let size = ln_mag - ka * r_star.ln();
        if alpha > 1.0 && size > prev {
            break;
        }
        prev = size;
        out.push(c);
        if size < (1e-19f64).ln() {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    out
}

fn natural_spline(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut c = vec![0.0; n];
    let mut r = vec![0.0; n];
    for i in 1..n - 1 {
        let rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
        let denom = 4.0 - c[i - 1];
        c[i] = 1.0 / denom;
        r[i] = (rhs - r[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = r[i] - c[i] * m[i + 1];
    }
    m
}

/// `int_0^b f` with dyadic panels toward 0 (handles `s^a`-type endpoint behaviour).
fn dyadic_to_zero(rule: &GaussRule, b: f64, levels: usize, f: &impl Fn(f64) -> f64) -> f64 {
    let mut s = 0.0;
    let mut hi = b;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        s += rule.integrate(lo, hi, f);
        hi = lo;
    }
    s + rule.integrate(0.0, hi, f)
}

/// Repeated averaging of partial sums of an alternating series.
fn euler_limit(partial: &[f64]) -> f64 {
    let mut v = partial.to_vec();
    while v.len() > 1 {
        for i in 0..v.len() - 1 {
            v[i] = 0.5 * (v[i] + v[i + 1]);
        }
        v.pop();
    }
    v[0]
}
