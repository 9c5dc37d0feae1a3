//! Monte Carlo for `E_x[exp(kappa int_0^t |X_s|^{-a} ds) f(X_t)]` over isotropic stable paths.

use crate::constants::ModelParams;
use crate::error::{domain, Error, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub params: ModelParams,
    pub n_paths: usize,
    pub dt: f64,
    /// Radius below which `|X|` is replaced in the potential; `dt^{1/a}/10` when absent.
    pub clip_radius: Option<f64>,
    /// Steps are halved while `|X| < substep_factor * step^{1/a}`.
    pub substep_factor: f64,
    pub seed: u64,
}

impl MCConfig {
    pub fn new(params: ModelParams, n_paths: usize, dt: f64, seed: u64) -> Self {
        MCConfig { params, n_paths, dt, clip_radius: None, substep_factor: 10.0, seed }
    }

    pub fn clip(&self) -> f64 {
        self.clip_radius.unwrap_or(self.dt.powf(1.0 / self.params.alpha) / 10.0)
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_paths == 0 {
            return domain("at least one path is required");
        }
        if !(self.dt > 0.0) {
            return domain(format!("time step {} must be positive", self.dt));
        }
        if !(self.clip() > 0.0) {
            return domain("clip radius must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Fraction of potential evaluations where the clip radius was active.
    pub clipped_fraction: f64,
    pub mean_steps: f64,
    pub max_weight: f64,
}

/// Symmetric stable variate with `E e^{i xi X} = e^{-dt |xi|^a}` from two uniforms in `(0, 1)`.
pub fn sample_stable_increment_1d(alpha: f64, dt: f64, u1: f64, u2: f64) -> f64 {
    let v = PI * (u1 - 0.5);
    let w = -u2.ln();
    let x = if (alpha - 1.0).abs() < 1e-12 {
        v.tan()
    } else {
        (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
    };
    dt.powf(1.0 / alpha) * x
}

/// Positive stable variate with `E e^{-l A} = e^{-l^b}`, `0 < b < 1`.
fn positive_stable(beta: f64, u: f64, w: f64) -> f64 {
    let a = (beta * PI * u).sin() / (PI * u).sin();
    let b = ((1.0 - beta) * PI * u).sin() / ((beta * PI * u).sin() * w);
    a.powf(1.0 / beta) * b.powf((1.0 - beta) / beta)
}

fn open_uniform(rng: &mut impl RngCore) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Isotropic increment `sqrt(2 A) G` with `A` positive `a/2`-stable at time `dt`.
pub fn sample_isotropic_increment(alpha: f64, dt: f64, rng: &mut impl RngCore, out: &mut [f64]) {
    let s = if alpha == 2.0 {
        dt
    } else {
        let u = open_uniform(rng);
        let w = -open_uniform(rng).ln();
        dt.powf(2.0 / alpha) * positive_stable(0.5 * alpha, u, w)
    };
    let c = (2.0 * s).sqrt();
    for o in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *o = c * g;
    }
}

fn increment(d: usize, alpha: f64, dt: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    if d == 1 {
        let u1 = open_uniform(rng);
        let u2 = open_uniform(rng);
        out[0] = sample_stable_increment_1d(alpha, dt, u1, u2);
    } else {
        sample_isotropic_increment(alpha, dt, rng, out);
    }
}

/// Random stream of one path.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(path);
    r
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

struct PathStats {
    weight: f64,
    steps: usize,
    evals: usize,
    clipped: usize,
}

fn simulate_path(x: &[f64], t: f64, cfg: &MCConfig, rng: &mut ChaCha8Rng, end: &mut [f64], dx: &mut [f64]) -> Result<PathStats> {
    let p = &cfg.params;
    let (a, kappa) = (p.alpha, p.kappa);
    let clip = cfg.clip();
    let min_dt = (clip / cfg.substep_factor).powf(a).min(cfg.dt);
    end.copy_from_slice(x);
    let mut s = 0.0;
    let mut functional = 0.0;
    let mut st = PathStats { weight: 1.0, steps: 0, evals: 0, clipped: 0 };
    let mut r = norm(end);
    let pot = |r: f64, st: &mut PathStats| {
        st.evals += 1;
        if r < clip {
            st.clipped += 1;
        }
        r.max(clip).powf(-a)
    };
    let mut q0 = if kappa > 0.0 { pot(r, &mut st) } else { 0.0 };
    while s < t {
        let mut h = cfg.dt.min(t - s);
        while r < cfg.substep_factor * h.powf(1.0 / a) && h > min_dt {
            h *= 0.5;
        }
        if t - s - h < 1e-12 * t {
            h = t - s;
        }
        increment(p.d, a, h, rng, dx);
        for (e, v) in end.iter_mut().zip(dx.iter()) {
            *e += v;
        }
        r = norm(end);
        if kappa > 0.0 {
            let q1 = pot(r, &mut st);
            functional += 0.5 * h * kappa * (q0 + q1);
            q0 = q1;
        }
        s += h;
        st.steps += 1;
    }
    if functional > 700.0 {
        return Err(Error::Unstable(format!("path weight exp({functional:.1}) overflows; raise the clip radius")));
    }
    st.weight = functional.exp();
    Ok(st)
}

/// Estimates `P~_t f(x)` by the Feynman-Kac weight with trapezoidal potential sums.
pub fn estimate_semigroup(x: &[f64], t: f64, f: &dyn Fn(&[f64]) -> f64, cfg: &MCConfig) -> Result<MCEstimate> {
    cfg.validate()?;
    let d = cfg.params.d;
    if x.len() != d {
        return domain(format!("start point has {} components, expected {d}", x.len()));
    }
    if norm(x) == 0.0 {
        return domain("start point must differ from the origin");
    }
    if !(t > 0.0) {
        return domain(format!("time t = {t} must be positive"));
    }
    let mut values = Vec::with_capacity(cfg.n_paths);
    let mut end = vec![0.0; d];
    let mut dx = vec![0.0; d];
    let (mut steps, mut evals, mut clipped) = (0usize, 0usize, 0usize);
    let mut max_weight: f64 = 1.0;
    for i in 0..cfg.n_paths {
        let mut rng = path_rng(cfg.seed, i as u64);
        let st = simulate_path(x, t, cfg, &mut rng, &mut end, &mut dx)?;
        steps += st.steps;
        evals += st.evals;
        clipped += st.clipped;
        max_weight = max_weight.max(st.weight);
        values.push(st.weight * f(&end));
    }
    let n = cfg.n_paths as f64;
    let mean = pairwise_sum(&values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = if cfg.n_paths > 1 { pairwise_sum(&sq) / (n - 1.0) } else { 0.0 };
    Ok(MCEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        clipped_fraction: if evals > 0 { clipped as f64 / evals as f64 } else { 0.0 },
        mean_steps: steps as f64 / n,
        max_weight,
    })
}

/// Payoffs available from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payoff {
    One,
    H,
    Indicator(f64, f64),
}

impl Payoff {
    pub fn parse(s: &str) -> Result<Payoff> {
        match s {
            "one" => Ok(Payoff::One),
            "h" => Ok(Payoff::H),
            _ => {
                let rest = s
                    .strip_prefix("indicator:")
                    .ok_or_else(|| Error::Domain(format!("unknown payoff '{s}'")))?;
                let (a, b) = rest
                    .split_once(',')
                    .ok_or_else(|| Error::Domain(format!("indicator payoff needs 'a,b', got '{rest}'")))?;
                let a: f64 = a.trim().parse().map_err(|_| Error::Domain(format!("bad bound '{a}'")))?;
                let b: f64 = b.trim().parse().map_err(|_| Error::Domain(format!("bad bound '{b}'")))?;
                if !(a < b) {
                    return domain("indicator bounds must satisfy a < b");
                }
                Ok(Payoff::Indicator(a, b))
            }
        }
    }

    /// Payoff as a function of the end point; the indicator acts on `|x|`.
    pub fn eval(&self, delta: f64, x: &[f64]) -> f64 {
        match *self {
            Payoff::One => 1.0,
            Payoff::H => norm(x).powf(-delta),
            Payoff::Indicator(a, b) => {
                let r = if x.len() == 1 { x[0] } else { norm(x) };
                if r >= a && r <= b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_branch_is_tangent() {
        let x = sample_stable_increment_1d(1.0, 1.0, 0.75, 0.3);
        assert!((x - (0.25 * PI).tan()).abs() < 1e-12);
    }

    #[test]
    fn positive_stable_laplace_transform() {
        let n = 200_000;
        for &beta in &[0.25, 0.5, 0.75] {
            let mut rng = path_rng(7, 0);
            let draws: Vec<f64> = (0..n)
                .map(|_| {
                    let u = open_uniform(&mut rng);
                    let w = -open_uniform(&mut rng).ln();
                    positive_stable(beta, u, w)
                })
                .collect();
            for &l in &[0.3, 1.0, 3.0] {
                let m = draws.iter().map(|a| (-l * a).exp()).sum::<f64>() / n as f64;
                let want = (-f64::powf(l, beta)).exp();
                assert!((m - want).abs() < 5.0 * 0.5 / (n as f64).sqrt(), "beta={beta} l={l}: {m} vs {want}");
            }
        }
    }

    #[test]
    fn payoff_parsing() {
        assert_eq!(Payoff::parse("indicator:1,2").unwrap(), Payoff::Indicator(1.0, 2.0));
        assert!(Payoff::parse("indicator:2,1").is_err());
        assert!(Payoff::parse("square").is_err());
    }
}
