//! Gamma-function constants of the Hardy operator and the coupling/exponent correspondence.
//!
//! The coupling is written as `kappa(delta) = delta (d - alpha - delta) U(delta)` with
//! `U` free of Gamma poles, so both endpoints of `[0, d - alpha]` are regular.

use crate::error::{domain, Error, Result};
use crate::special::{digamma, gamma, ln_gamma, sphere_area, trigamma};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn check_dims(d: usize, alpha: f64) -> Result<()> {
    if d == 0 {
        return domain("dimension must be at least 1");
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return domain(format!("alpha = {alpha} outside (0, 2)"));
    }
    if alpha >= d as f64 {
        return domain(format!("alpha = {alpha} must be below d = {d}"));
    }
    Ok(())
}

/// `ln U(delta)` where `kappa = delta (d - alpha - delta) U`.
fn ln_u(delta: f64, d: f64, alpha: f64) -> f64 {
    let m = d - alpha - delta;
    alpha * 2f64.ln() - 4f64.ln() + ln_gamma(0.5 * (delta + alpha)) + ln_gamma(0.5 * (d - delta))
        - ln_gamma(1.0 + 0.5 * delta)
        - ln_gamma(1.0 + 0.5 * m)
}

fn dln_u(delta: f64, d: f64, alpha: f64) -> (f64, f64) {
    let m = d - alpha - delta;
    let s = 0.5
        * (digamma(0.5 * (delta + alpha)) - digamma(0.5 * (d - delta)) - digamma(1.0 + 0.5 * delta)
            + digamma(1.0 + 0.5 * m));
    let s1 = 0.25
        * (trigamma(0.5 * (delta + alpha)) + trigamma(0.5 * (d - delta))
            - trigamma(1.0 + 0.5 * delta)
            - trigamma(1.0 + 0.5 * m));
    (s, s1)
}

fn kappa_raw(delta: f64, d: f64, alpha: f64) -> f64 {
    delta * (d - alpha - delta) * ln_u(delta, d, alpha).exp()
}

/// `kappa_b = 2^a Γ((b+a)/2) Γ((d-b)/2) / (Γ(b/2) Γ((d-b-a)/2))`, zero at both ends.
pub fn kappa_of_delta(delta: f64, d: usize, alpha: f64) -> Result<f64> {
    check_dims(d, alpha)?;
    let df = d as f64;
    if !(delta >= 0.0 && delta <= df - alpha) {
        return domain(format!("delta = {delta} outside [0, {}]", df - alpha));
    }
    Ok(kappa_raw(delta, df, alpha))
}

/// Best constant in the fractional Hardy inequality.
pub fn kappa_star(d: usize, alpha: f64) -> Result<f64> {
    check_dims(d, alpha)?;
    let df = d as f64;
    let g = gamma(0.25 * (df + alpha)) / gamma(0.25 * (df - alpha));
    Ok(2f64.powf(alpha) * g * g)
}

/// Inverse of `kappa_of_delta` on `[0, (d - alpha)/2]` by bisection.
pub fn delta_of_kappa(kappa: f64, d: usize, alpha: f64) -> Result<f64> {
    let ks = kappa_star(d, alpha)?;
    if kappa < 0.0 || kappa > ks * (1.0 + 1e-12) || kappa.is_nan() {
        return domain(format!("kappa = {kappa} outside [0, {ks}]"));
    }
    let half = 0.5 * (d as f64 - alpha);
    if kappa == 0.0 {
        return Ok(0.0);
    }
    if kappa >= ks {
        return Ok(half);
    }
    let (mut lo, mut hi) = (0.0, half);
    let mut mid = 0.5 * half;
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            return Ok(mid);
        }
        if kappa_raw(mid, d as f64, alpha) < kappa {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
    }
    Err(Error::NoConvergence { iterations: 200, defect: hi - lo })
}

fn derivative_analytic(delta: f64, order: u8, d: f64, alpha: f64) -> f64 {
    let m = d - alpha;
    if delta == 0.0 && order == 1 {
        return 2f64.powf(alpha - 1.0) * gamma(0.5 * alpha) * gamma(0.5 * d) / gamma(0.5 * m);
    }
    let u = ln_u(delta, d, alpha).exp();
    let (s, s1) = dln_u(delta, d, alpha);
    let p = delta * (m - delta);
    let p1 = m - 2.0 * delta;
    match order {
        1 => p1 * u + p * u * s,
        _ => -2.0 * u + 2.0 * p1 * u * s + p * u * (s * s + s1),
    }
}

/// First or second derivative of `kappa_delta` in `delta`.
///
/// The digamma form is compared with central differences before returning.
pub fn kappa_derivative(delta: f64, order: u8, d: usize, alpha: f64) -> Result<f64> {
    check_dims(d, alpha)?;
    let df = d as f64;
    let half = 0.5 * (df - alpha);
    if !(0.0..=half).contains(&delta) {
        return domain(format!("delta = {delta} outside [0, {half}]"));
    }
    if order != 1 && order != 2 {
        return domain(format!("derivative order {order} not in {{1, 2}}"));
    }
    let value = derivative_analytic(delta, order, df, alpha);
    let scale = df - alpha;
    let fd = if order == 1 {
        let h = 1e-5 * scale;
        (kappa_raw(delta + h, df, alpha) - kappa_raw(delta - h, df, alpha)) / (2.0 * h)
    } else {
        let h = 1e-4 * scale;
        (kappa_raw(delta + h, df, alpha) - 2.0 * kappa_raw(delta, df, alpha)
            + kappa_raw(delta - h, df, alpha))
            / (h * h)
    };
    if (value - fd).abs() > 1e-6 * value.abs().max(1.0) {
        return Err(Error::Check(format!(
            "kappa derivative order {order} at delta={delta}: analytic {value:e} vs difference {fd:e}"
        )));
    }
    Ok(value)
}

/// Riesz constant `A = G((d-a)/2) / (G(a/2) 2^a pi^{d/2})`.
pub fn riesz_constant(d: usize, alpha: f64) -> Result<f64> {
    check_dims(d, alpha)?;
    let df = d as f64;
    Ok(gamma(0.5 * (df - alpha)) / (gamma(0.5 * alpha) * 2f64.powf(alpha) * PI.powf(0.5 * df)))
}

/// Constant `c_beta` with `int_0^inf c_beta t^{(d-a-b)/a} p_t(x) dt = |x|^{-beta}`.
///
/// The time integral equals `alpha |x|^{-beta} int_0^inf u^{beta-1} p_1(u) du`, and the
/// radial moment is the absolute moment `E|Y|^{beta-d}` of the stable law divided by the
/// sphere area.
pub fn c_beta(beta: f64, d: usize, alpha: f64) -> Result<f64> {
    check_dims(d, alpha)?;
    let df = d as f64;
    if !(beta > 0.0 && beta < df) {
        return domain(format!("beta = {beta} outside (0, {d})"));
    }
    let ln_c = (df - beta + 1.0) * 2f64.ln() + 0.5 * df * PI.ln() + ln_gamma(0.5 * (df - beta) + 1.0)
        - alpha.ln()
        - ln_gamma(0.5 * beta)
        - ln_gamma((df - beta) / alpha + 1.0);
    Ok(ln_c.exp())
}

/// Dimension, stability index and a consistent coupling/exponent pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub alpha: f64,
    pub delta: f64,
    pub kappa: f64,
}

impl ModelParams {
    pub fn from_delta(d: usize, alpha: f64, delta: f64) -> Result<Self> {
        check_dims(d, alpha)?;
        let half = 0.5 * (d as f64 - alpha);
        if !(0.0..=half * (1.0 + 1e-14)).contains(&delta) {
            return domain(format!("delta = {delta} outside [0, {half}]"));
        }
        let delta = delta.min(half);
        let kappa = kappa_of_delta(delta, d, alpha)?;
        Ok(ModelParams { d, alpha, delta, kappa })
    }

    pub fn from_kappa(d: usize, alpha: f64, kappa: f64) -> Result<Self> {
        let delta = delta_of_kappa(kappa, d, alpha)?;
        let kappa = kappa_of_delta(delta, d, alpha)?;
        Ok(ModelParams { d, alpha, delta, kappa })
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.d, self.alpha)?;
        let k = kappa_of_delta(self.delta, self.d, self.alpha)?;
        if (k - self.kappa).abs() > 1e-12 * k.max(1e-300) && !(k == 0.0 && self.kappa == 0.0) {
            return domain(format!("kappa {} inconsistent with delta {}", self.kappa, self.delta));
        }
        if self.delta > self.critical_delta() * (1.0 + 1e-14) {
            return domain("delta above the critical exponent");
        }
        Ok(())
    }

    pub fn critical_delta(&self) -> f64 {
        0.5 * (self.d as f64 - self.alpha)
    }

    pub fn is_critical(&self) -> bool {
        (self.delta - self.critical_delta()).abs() < 1e-12
    }

    pub fn kappa_star(&self) -> f64 {
        kappa_star(self.d, self.alpha).unwrap_or(f64::NAN)
    }

    /// Potential `q(x) = kappa |x|^{-alpha}`.
    #[inline]
    pub fn potential(&self, r: f64) -> f64 {
        self.kappa * r.abs().powf(-self.alpha)
    }

    /// Invariant weight `h(x) = |x|^{-delta}`.
    #[inline]
    pub fn h(&self, r: f64) -> f64 {
        r.abs().powf(-self.delta)
    }

    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.d)
    }
}
