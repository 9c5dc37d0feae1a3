//! Self-similar solution `Psi_t`, the stationary density `phi` of the Ornstein-Uhlenbeck
//! semigroup, and the time potential `mu_t`.
//!
//! Substituting `Psi_r(z) = r^{(delta-d)/a} Psi_1(r^{-1/a} z)` and `z = r^{1/a} w` into the
//! Duhamel formula for `Psi` gives
//! `Psi_1(x) = kappa int_0^1 r^{delta/a - 1} int Psi_1(w) |w|^{-a} p(1 - r, x, r^{1/a} w) dw dr`.
//! The radial form of the inner integral is
//! `int_0^inf rho^{d-1-a} Psi_1(rho) K_{1-r}(|x|, r^{1/a} rho) drho` with the spherical mean
//! `K_t(a, b) = int_{S^{d-1}} p_t(|a e - b theta|) dtheta`.

use crate::constants::{kappa_derivative, ModelParams};
use crate::error::{domain, Error, Result};
use crate::hardy_kernel::{integrate_against, KernelTable, LineRule};
use crate::numerics::{cubic_weights, extrapolate_to_zero, Extrapolated, integrate_radial, make_graded_grid, Profile, RadialGrid};
use crate::special::{gamma, sphere_area, GaussRule, GL8};
use crate::stable::StableKernel;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub ratio: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// The `r`-integral stops at `1 - tau_floor min(1, |x|^a)`; the rest uses the endpoint limit.
    pub tau_floor: f64,
    pub v_floor: f64,
    pub points: usize,
    pub panel_ratio: f64,
    pub time_ratio: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            r_min: 1e-6,
            r_max: 1e6,
            ratio: 1.1,
            tol: 1e-7,
            max_sweeps: 500,
            tau_floor: 1e-6,
            v_floor: 1e-8,
            points: 6,
            panel_ratio: 3.0,
            time_ratio: 3.0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PowerDiagnostics {
    pub sweeps: usize,
    /// Weighted `L^1` change between successive normalized iterates.
    pub history: Vec<f64>,
    /// Growth of the normalization over the last sweep, minus one.
    pub normalization_drift: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfSimilarSolution {
    pub params: ModelParams,
    pub psi1: Profile,
    pub phi: Profile,
    pub diagnostics: PowerDiagnostics,
}

/// Spherical mean of the free kernel.
struct RadialKernel {
    d: usize,
    alpha: f64,
    line: Arc<StableKernel>,
    full: Arc<StableKernel>,
}

impl RadialKernel {
    fn new(d: usize, alpha: f64) -> Result<Self> {
        Ok(RadialKernel { d, alpha, line: StableKernel::shared(1, alpha)?, full: StableKernel::shared(d, alpha)? })
    }

    fn eval(&self, t: f64, a: f64, b: f64) -> f64 {
        match self.d {
            1 => self.line.density(t, a - b) + self.line.density(t, a + b),
            3 => {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                if lo < 1e-3 * hi || hi < 1e-3 * t.powf(1.0 / self.alpha) {
                    return 4.0 * PI * self.full.density(t, hi);
                }
                (self.line.density(t, a - b) - self.line.density(t, a + b)) / (a * b)
            }
            d => {
                let hi = a.max(b);
                let th0 = ((a - b).abs().max(0.1 * t.powf(1.0 / self.alpha)) / hi).min(PI);
                let e = (d - 2) as i32;
                let f = |th: f64| {
                    let s = (0.5 * th).sin();
                    let dist = ((a - b) * (a - b) + 4.0 * a * b * s * s).sqrt();
                    self.full.density(t, dist) * th.sin().powi(e)
                };
                let (mut lo, mut up, mut sum) = (0.0, th0, 0.0);
                loop {
                    sum += GL8.integrate(lo, up, f);
                    if up >= PI {
                        break;
                    }
                    lo = up;
                    up = (2.0 * up).min(PI);
                }
                sphere_area(d - 1) * sum
            }
        }
    }
}

/// Linear interpolation of `Psi` from nodal values of `phi = Psi r^delta`.
///
/// Cubic in `log r`, `phi` constant below the grid and `Psi ~ r^tail` above it.
struct PhiInterp {
    n: usize,
    ln_r0: f64,
    h: f64,
    r_min: f64,
    r_max: f64,
    delta: f64,
    tail: f64,
}

impl PhiInterp {
    fn new(grid: &RadialGrid, delta: f64, tail: f64) -> Self {
        PhiInterp {
            n: grid.len(),
            ln_r0: grid.r_min().ln(),
            h: grid.grading.ln(),
            r_min: grid.r_min(),
            r_max: grid.r_max(),
            delta,
            tail,
        }
    }

    /// Indices, weights and count with `phi(r) = sum w_k phi_k`.
    #[inline]
    fn phi_stencil(&self, r: f64) -> ([usize; 4], [f64; 4], usize) {
        let n = self.n;
        if r <= self.r_min {
            return ([0; 4], [1.0, 0.0, 0.0, 0.0], 1);
        }
        if r >= self.r_max {
            let w = (r / self.r_max).powf(self.tail + self.delta);
            return ([n - 1; 4], [w, 0.0, 0.0, 0.0], 1);
        }
        let pos = (r.ln() - self.ln_r0) / self.h;
        let i = (pos.floor() as usize).min(n - 2);
        let start = i.saturating_sub(1).min(n - 4);
        let w = cubic_weights(pos - start as f64);
        ([start, start + 1, start + 2, start + 3], w, 4)
    }
}

/// Linear functional `omega int phi r^{d-1-2 delta} dr` on nodal `phi` values.
fn h2_functional(grid: &RadialGrid, d: usize, delta: f64, tail: f64) -> Vec<f64> {
    let df = d as f64;
    let grid = &grid.with_dimension(d);
    let mut w: Vec<f64> = grid.weights.iter().zip(&grid.nodes).map(|(w, r)| w * r.powf(-2.0 * delta)).collect();
    let n = w.len();
    w[0] += grid.r_min().powf(df - 2.0 * delta) / (df - 2.0 * delta);
    let e = tail + delta + df - 2.0 * delta;
    w[n - 1] += grid.r_max().powf(df - 2.0 * delta) / (-e);
    let omega = sphere_area(d);
    w.iter_mut().for_each(|v| *v *= omega);
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&m[i * n..(i + 1) * n], x);
    }
}

/// Normalized power iteration `x <- M x / <w, M x>`.
fn power_iterate(m: &[f64], w: &[f64], start: Vec<f64>, tol: f64, cap: usize) -> Result<(Vec<f64>, PowerDiagnostics)> {
    let n = start.len();
    let mut x = start;
    let s = dot(w, &x);
    x.iter_mut().for_each(|v| *v /= s);
    let mut y = vec![0.0; n];
    let mut diag = PowerDiagnostics::default();
    let absw: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    for sweep in 1..=cap {
        matvec(m, &x, &mut y);
        let s = dot(w, &y);
        if !(s > 0.0) {
            return Err(Error::Check(format!("power iteration lost positivity at sweep {sweep}")));
        }
        y.iter_mut().for_each(|v| *v /= s);
        let change: f64 = absw.iter().zip(x.iter().zip(&y)).map(|(a, (p, q))| a * (p - q).abs()).sum();
        diag.history.push(change);
        diag.normalization_drift = s - 1.0;
        diag.sweeps = sweep;
        std::mem::swap(&mut x, &mut y);
        if change < tol {
            return Ok((x, diag));
        }
    }
    Err(Error::NoConvergence { iterations: cap, defect: *diag.history.last().unwrap_or(&f64::NAN) })
}

/// Nodes `(r, weight)` on `(0, 1 - tau_min)` for `int_0^1 r^{delta/a - 1} f(r) dr`.
fn duhamel_time_nodes(beta: f64, tau_min: f64, cfg: &ProfileConfig, rule: &GaussRule) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    // r = v^{1/beta} on (0, 1/2], weight dv / beta.
    let v_half = 0.5f64.powf(beta);
    let mut b = v_half;
    while b > cfg.v_floor {
        let mut a = b / cfg.time_ratio;
        if a < 1.25 * cfg.v_floor {
            a = cfg.v_floor;
        }
        for (v, w) in rule.points(a, b) {
            out.push((v.powf(1.0 / beta), w / beta));
        }
        b = a;
    }
    out.push(((0.5 * cfg.v_floor).powf(1.0 / beta), cfg.v_floor / beta));
    let mut b = 0.5;
    while b > tau_min {
        let mut a = b / cfg.time_ratio;
        if a < 1.25 * tau_min {
            a = tau_min;
        }
        for (tau, w) in rule.points(a, b) {
            let r = 1.0 - tau;
            out.push((r, w * r.powf(beta - 1.0)));
        }
        b = a;
    }
    out
}

fn comparator(params: &ModelParams, r: f64) -> f64 {
    let d = params.d as f64;
    (1.0 + r.powf(-params.delta)) * r.powf(-d - params.alpha).min(1.0)
}

fn free_profile(params: &ModelParams, grid: &RadialGrid) -> Result<Profile> {
    let k = StableKernel::shared(params.d, params.alpha)?;
    Ok(Profile::from_fn(grid, "psi1", |r| k.p1(r)).with_exponents(Some(0.0), Some(-(params.d as f64) - params.alpha)))
}

/// Assembled matrix of the scaling-reduced Duhamel operator acting on nodal `phi`.
fn fixed_point_matrix(params: &ModelParams, grid: &RadialGrid, cfg: &ProfileConfig) -> Result<Vec<f64>> {
    let (d, a, delta, kappa) = (params.d, params.alpha, params.delta, params.kappa);
    let df = d as f64;
    let kern = RadialKernel::new(d, a)?;
    let tail = -df - a;
    let interp = PhiInterp::new(grid, delta, tail);
    let line = LineRule::new(cfg.points, cfg.panel_ratio, 1e4).with_tail(1.0 + 2.0 * a);
    let rule = GaussRule::new(cfg.points);
    let sigma = 1.0 + a + delta - df;
    let n = grid.len();
    let mut m = vec![0.0; n * n];
    let mut nodes = Vec::new();
    for (i, &x) in grid.nodes.iter().enumerate() {
        let tau_min = cfg.tau_floor * x.powf(a).min(1.0);
        let row = &mut m[i * n..(i + 1) * n];
        for (r, wr) in duhamel_time_nodes(delta / a, tau_min, cfg, &rule) {
            let tau = 1.0 - r;
            let scale = r.powf(1.0 / a);
            let width = (tau / r).powf(1.0 / a);
            line.build(&[(x / scale, width)], grid.r_min(), sigma, &mut nodes);
            for &(rho, wrho) in nodes.iter().filter(|p| p.0 > 0.0) {
                let f = kappa * wr * wrho * rho.powf(df - 1.0 - a - delta) * kern.eval(tau, x, scale * rho);
                let (idx, w, len) = interp.phi_stencil(rho);
                for k in 0..len {
                    row[idx[k]] += f * w[k];
                }
            }
        }
        let xd = x.powf(delta);
        row.iter_mut().for_each(|v| *v *= xd);
        row[i] += tau_min * kappa * x.powf(-a);
    }
    Ok(m)
}

/// `Psi_1` from the scaling-reduced Duhamel equation, normalized by `int Psi_1 h = 1`.
pub fn psi1_fixed_point(params: &ModelParams, cfg: &ProfileConfig) -> Result<SelfSimilarSolution> {
    params.validate()?;
    let grid = make_graded_grid(cfg.r_min, cfg.r_max, cfg.ratio, params.d)?;
    let df = params.d as f64;
    let (a, delta) = (params.alpha, params.delta);
    if params.kappa == 0.0 {
        let psi1 = free_profile(params, &grid)?;
        let phi = psi1.map("phi", |_, v| v).with_exponents(Some(0.0), Some(-df - a));
        return Ok(SelfSimilarSolution { params: *params, psi1, phi, diagnostics: PowerDiagnostics::default() });
    }
    let m = fixed_point_matrix(params, &grid, cfg)?;
    let w = h2_functional(&grid, params.d, delta, -df - a);
    let start: Vec<f64> = grid.nodes.iter().map(|&r| comparator(params, r) * r.powf(delta)).collect();
    let (phi, diagnostics) = power_iterate(&m, &w, start, cfg.tol, cfg.max_sweeps)?;
    Ok(solution_from_phi(params, &grid, phi, diagnostics))
}

fn solution_from_phi(params: &ModelParams, grid: &RadialGrid, phi: Vec<f64>, diagnostics: PowerDiagnostics) -> SelfSimilarSolution {
    let tail = -(params.d as f64) - params.alpha;
    let delta = params.delta;
    let phi = Profile::new(grid.clone(), phi, "phi").with_exponents(Some(0.0), Some(tail + delta));
    let psi1 = phi.map("psi1", |r, v| v * r.powf(-delta)).with_exponents(Some(-delta), Some(tail));
    SelfSimilarSolution { params: *params, psi1, phi, diagnostics }
}

impl SelfSimilarSolution {
    /// Solution object from a `Psi_1` profile sampled on any geometric grid.
    pub fn from_psi1(params: &ModelParams, psi1: Profile) -> Self {
        let tail = -(params.d as f64) - params.alpha;
        let delta = params.delta;
        let psi1 = psi1.with_exponents(Some(-delta), Some(tail));
        let phi = psi1.map("phi", |r, v| v * r.powf(delta)).with_exponents(Some(0.0), Some(tail + delta));
        SelfSimilarSolution { params: *params, psi1, phi, diagnostics: PowerDiagnostics::default() }
    }

    /// `int Psi_1 h`.
    pub fn normalization(&self) -> f64 {
        let d = self.params.delta;
        let g = self.psi1.map("psi1 h", |r, v| v * r.powf(-d)).with_exponents(
            Some(-2.0 * d),
            Some(-(self.params.d as f64) - self.params.alpha - d),
        );
        integrate_radial(&g, self.params.d)
    }

    /// Slope of `log Psi_1` against `log r` over the first decade of the grid.
    pub fn head_slope(&self) -> f64 {
        let g = &self.psi1.grid;
        let r0 = g.r_min();
        let r1 = 10.0 * r0;
        (self.psi1.eval(r1) / self.psi1.eval(r0)).ln() / 10f64.ln()
    }

    /// Extreme ratios of `Psi_1` to `(1 + r^{-delta})(1 ^ r^{-d-a})` and of `phi` to
    /// `(1 + r)^{-d-a+delta}` over the grid.
    pub fn comparator_constants(&self) -> ((f64, f64), (f64, f64)) {
        let p = &self.params;
        let e = -(p.d as f64) - p.alpha + p.delta;
        let mut a = (f64::INFINITY, 0.0f64);
        let mut b = (f64::INFINITY, 0.0f64);
        for (k, &r) in self.psi1.grid.nodes.iter().enumerate() {
            let u = self.psi1.values[k] / comparator(p, r);
            let v = self.phi.values[k] / (1.0 + r).powf(e);
            a = (a.0.min(u), a.1.max(u));
            b = (b.0.min(v), b.1.max(v));
        }
        (a, b)
    }

    /// `Psi_t(x) = t^{(delta-d)/a} Psi_1(t^{-1/a} x)`.
    pub fn psi_t(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0) {
            return domain(format!("time t = {t} must be positive"));
        }
        let p = &self.params;
        let s = t.powf(-1.0 / p.alpha);
        Ok(t.powf((p.delta - p.d as f64) / p.alpha) * self.psi1.eval(x.abs() * s))
    }

    /// `Psi_t` sampled on the grid scaled by `t^{1/a}`.
    pub fn psi_t_profile(&self, t: f64) -> Result<Profile> {
        if !(t > 0.0) {
            return domain(format!("time t = {t} must be positive"));
        }
        let p = &self.params;
        let s = t.powf(1.0 / p.alpha);
        let g = &self.psi1.grid;
        let mut grid = g.clone();
        grid.nodes.iter_mut().for_each(|r| *r *= s);
        grid = grid.with_dimension(p.d);
        let c = t.powf((p.delta - p.d as f64) / p.alpha);
        let values = self.psi1.values.iter().map(|v| c * v).collect();
        Ok(Profile::new(grid, values, "psi_t").with_exponents(self.psi1.head_exponent, self.psi1.tail_exponent))
    }
}

/// `int_a^inf u^p f(u) du` with the profile's power-law extensions.
pub fn moment_from(f: &Profile, a: f64, p: f64) -> Result<f64> {
    let g = &f.grid;
    let n = g.len();
    let (r0, rn) = (g.r_min(), g.r_max());
    let (h0, h1) = (f.head_power(), f.tail_power());
    let mut s = 0.0;
    if a < r0 {
        let e = h0 + p + 1.0;
        if a == 0.0 && !(e > 0.0) {
            return domain(format!("moment of order {p} diverges at the origin"));
        }
        let c = f.values[0] * r0.powf(-h0);
        s += if e.abs() < 1e-12 { c * (r0 / a).ln() } else { c * (r0.powf(e) - a.powf(e)) / e };
    }
    for c in 0..n - 1 {
        let (lo, hi) = (g.nodes[c].max(a), g.nodes[c + 1]);
        if hi <= lo {
            continue;
        }
        s += GL8.integrate(lo.ln(), hi.ln(), |u| {
            let r = u.exp();
            r.powf(p + 1.0) * f.eval(r)
        });
    }
    let e = h1 + p + 1.0;
    if !(e < 0.0) {
        return domain(format!("moment of order {p} diverges at infinity"));
    }
    let b = a.max(rn);
    s += -f.values[n - 1] * rn.powf(-h1) * b.powf(e) / e;
    Ok(s)
}

fn check_table(params: &ModelParams, table: &KernelTable) -> Result<()> {
    let t = &table.params;
    if t.d != 1 {
        return domain("kernel table must be one-dimensional");
    }
    if params.d != t.d || (params.alpha - t.alpha).abs() > 1e-14 || (params.delta - t.delta).abs() > 1e-12 {
        return domain("kernel table parameters differ from the solution parameters");
    }
    Ok(())
}

/// `Psi_1(x) = lim_{y -> 0} p~(1, x, y) |y|^delta`, averaged over `y` and `-y`.
pub fn psi1_from_kernel(table: &KernelTable) -> Result<Profile> {
    let p = &table.params;
    let g = &table.grid;
    if p.d != 1 {
        return domain("kernel route needs a one-dimensional table");
    }
    let samples: Vec<Vec<(f64, f64)>> = g
        .nodes
        .iter()
        .map(|&x| {
            g.nodes[..4]
                .iter()
                .map(|&y| (y, 0.5 * (table.ptilde(1.0, x, y) + table.ptilde(1.0, x, -y)) * y.powf(p.delta)))
                .collect()
        })
        .collect();
    let fits: Vec<Result<Extrapolated>> = samples.iter().map(|s| extrapolate_to_zero(s)).collect();
    // Nodes whose correction changes sign reuse the median exponent of the others.
    let mut exps: Vec<f64> = fits.iter().filter_map(|f| f.as_ref().ok()).map(|e| e.exponent).filter(|e| e.is_finite()).collect();
    if exps.is_empty() {
        return Err(Error::Extrapolation("no node admits a power correction".into()));
    }
    exps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = exps[exps.len() / 2];
    let ratio = g.nodes[1] / g.nodes[0];
    let values: Vec<f64> = fits
        .iter()
        .zip(&samples)
        .map(|(f, s)| match f {
            Ok(e) => e.value,
            Err(_) => {
                let (v0, v1) = (s[0].1, s[1].1);
                v0 - (v1 - v0) / (ratio.powf(median) - 1.0)
            }
        })
        .collect();
    Ok(Profile::new(g.clone(), values, "psi1").with_exponents(Some(-p.delta), Some(-1.0 - p.alpha)))
}

/// Stationary density of `L_t f(y) = int rho_{1-e^{-t}}(e^{-t/a} x, y) f(x) h^2(x) dx` at
/// `t = ln 2`, by power iteration on the table grid.
pub fn ou_power_iteration(table: &KernelTable, tol: f64, cap: usize) -> Result<(Profile, PowerDiagnostics)> {
    let p = table.params;
    if p.d != 1 {
        return domain("the stationary density needs a one-dimensional table");
    }
    let (a, delta) = (p.alpha, p.delta);
    let grid = &table.grid;
    let n = grid.len();
    let c = 2f64.powf(1.0 / a);
    let tail = -1.0 - a + delta;
    let interp = PhiInterp::new(grid, 0.0, tail);
    let line = LineRule::new(6, 3.0, 1e4).with_tail(2.0 + 2.0 * a);
    let k = table.kernel();
    let mut m = vec![0.0; n * n];
    let mut nodes = Vec::new();
    for (i, &y) in grid.nodes.iter().enumerate() {
        let row = &mut m[i * n..(i + 1) * n];
        line.build(&[(c * y, 1.0)], grid.r_min(), 2.0 * delta, &mut nodes);
        for &(x, w) in &nodes {
            let f = w * k.p1(x - c * y) * table.ratio(x, c * y) * x.abs().powf(-delta);
            let (idx, wk, len) = interp.phi_stencil(x.abs());
            for j in 0..len {
                row[idx[j]] += f * wk[j];
            }
        }
        let s = c.powf(1.0 - delta) * y.powf(delta);
        row.iter_mut().for_each(|v| *v *= s);
    }
    let w = h2_functional(grid, 1, delta, tail - delta);
    let start: Vec<f64> = grid.nodes.iter().map(|&r| (1.0 + r).powf(tail)).collect();
    let (phi, diag) = power_iterate(&m, &w, start, tol, cap)?;
    let phi = Profile::new(grid.clone(), phi, "phi").with_exponents(Some(0.0), Some(tail));
    Ok((phi, diag))
}

/// `phi(0)` and `int phi(2^{-1/a} x)^2 h^2(x) dx`.
pub fn stationary_consistency(phi: &Profile, params: &ModelParams) -> Result<(f64, f64)> {
    let g = &phi.grid;
    let samples: Vec<(f64, f64)> = (0..4).map(|k| (g.nodes[k], phi.values[k])).collect();
    let at_zero = extrapolate_to_zero(&samples).map(|e| e.value).unwrap_or(phi.values[0]);
    let (a, delta) = (params.alpha, params.delta);
    let c = 2f64.powf(-1.0 / a);
    let tail = phi.tail_power();
    let sq = phi
        .map("phi^2 h^2", |r, _| phi.eval(c * r).powi(2) * r.powf(-2.0 * delta))
        .with_exponents(Some(-2.0 * delta), Some(2.0 * tail - 2.0 * delta));
    Ok((at_zero, integrate_radial(&sq, params.d)))
}

/// `int |f - g| h` relative to `int |g| h`, both over the nodes of `g`.
pub fn relative_l1h(f: &Profile, g: &Profile, delta: f64) -> f64 {
    let grid = &g.grid;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &r) in grid.nodes.iter().enumerate() {
        let w = grid.weights[k] * r.powf(-delta);
        num += w * (f.eval(r) - g.values[k]).abs();
        den += w * g.values[k].abs();
    }
    num / den
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PotentialComparison {
    pub moment: f64,
    pub target: f64,
    pub ratio: f64,
}

/// `Gamma(d/2) / (2 pi^{d/2} kappa'_delta)`.
pub fn potential_target(params: &ModelParams) -> Result<f64> {
    let d = params.d as f64;
    let k1 = kappa_derivative(params.delta, 1, params.d, params.alpha)?;
    Ok(gamma(0.5 * d) / (2.0 * PI.powf(0.5 * d) * k1))
}

/// `a int_0^inf u^{d-delta-a-1} Psi_1(u) du`, which times `|x|^{delta+a-d}` equals
/// `int_0^inf Psi_s(x) ds` through `s = (|x|/u)^a`.
pub fn potential_constant(sol: &SelfSimilarSolution) -> Result<PotentialComparison> {
    let p = &sol.params;
    if p.is_critical() || p.delta >= p.critical_delta() {
        return domain("the time potential of the self-similar solution is infinite at the critical coupling");
    }
    let moment = p.alpha * moment_from(&sol.psi1, 0.0, p.d as f64 - p.delta - p.alpha - 1.0)?;
    let target = potential_target(p)?;
    Ok(PotentialComparison { moment, target, ratio: moment / target })
}

/// `mu_t(x) = int_0^t Psi_s(x) ds = a |x|^{delta+a-d} int_{|x| t^{-1/a}}^inf u^{d-delta-a-1} Psi_1(u) du`.
pub fn mu_t(sol: &SelfSimilarSolution, t: f64, x: f64) -> Result<f64> {
    let p = &sol.params;
    if !(t > 0.0) || x == 0.0 {
        return domain("mu_t needs t > 0 and x != 0");
    }
    let d = p.d as f64;
    let r = x.abs();
    let lower = r * t.powf(-1.0 / p.alpha);
    Ok(p.alpha * r.powf(p.delta + p.alpha - d) * moment_from(&sol.psi1, lower, d - p.delta - p.alpha - 1.0)?)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `mu_t(x)` against `Gamma(d/2)/(2 pi^{d/2} kappa'_delta) (|x|^{-g} - int p~(t, x, z) |z|^{-g} dz)`
/// with `g = d - delta - a`.
pub fn subcritical_identity(sol: &SelfSimilarSolution, table: &KernelTable, t: f64, x: f64) -> Result<IdentityCheck> {
    let p = &sol.params;
    check_table(p, table)?;
    if p.delta >= p.critical_delta() - 1e-12 {
        return domain("subcritical identity needs delta below (d - alpha)/2");
    }
    let g = 1.0 - p.delta - p.alpha;
    let v = integrate_against(table, t, x, g, g, |z| z.abs().powf(-g));
    let rhs = potential_target(p)? * (x.abs().powf(-g) - v);
    let lhs = mu_t(sol, t, x)?;
    Ok(IdentityCheck { lhs, rhs, ratio: lhs / rhs })
}

/// `mu_t(x)` against `Gamma(d/2)/(pi^{d/2} kappa''_delta) (|x|^{-delta} ln|x| - int p~(t, z, x) |z|^{-delta} ln|z| dz)`.
pub fn critical_log_identity(sol: &SelfSimilarSolution, table: &KernelTable, t: f64, x: f64) -> Result<IdentityCheck> {
    let p = &sol.params;
    check_table(p, table)?;
    if !p.is_critical() {
        return domain("logarithmic identity holds only at the critical coupling");
    }
    let delta = p.delta;
    let k2 = kappa_derivative(delta, 2, p.d, p.alpha)?;
    let c = gamma(0.5) / (PI.sqrt() * k2);
    let v = integrate_against(table, t, x, delta, delta, |z| z.abs().powf(-delta) * z.abs().ln());
    let rhs = c * (x.abs().powf(-delta) * x.abs().ln() - v);
    let lhs = mu_t(sol, t, x)?;
    Ok(IdentityCheck { lhs, rhs, ratio: lhs / rhs })
}

/// Relative defect of `int rho_t(0, y) rho_s(y, z) h^2(y) dy = rho_{t+s}(0, z)` with
/// `rho_t(0, y) = t^{(2 delta - d)/a} phi(t^{-1/a} y)`.
pub fn eta_semigroup_defect(phi: &Profile, table: &KernelTable, t: f64, s: f64, z: f64) -> Result<f64> {
    let p = &table.params;
    if !(t > 0.0 && s > 0.0) {
        return domain("times must be positive");
    }
    let a = p.alpha;
    let delta = p.delta;
    let eta = |t: f64, y: f64| t.powf((2.0 * delta - 1.0) / a) * phi.eval(y.abs() * t.powf(-1.0 / a));
    let opts = crate::hardy_kernel::QuadratureOptions::default();
    let nodes = table.line_nodes(&[(z, s.powf(1.0 / a))], s.min(t), 2.0 * delta, Some(2.0 + 2.0 * a), &opts);
    let lhs: f64 = nodes
        .iter()
        .map(|&(y, w)| w * eta(t, y) * table.rho(s, y, z) * y.abs().powf(-2.0 * delta))
        .sum();
    let rhs = eta(t + s, z);
    Ok((lhs - rhs).abs() / rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> ProfileConfig {
        ProfileConfig { ratio: 1.2, r_min: 1e-5, r_max: 1e5, ..ProfileConfig::default() }
    }

    #[test]
    fn moment_of_exact_power_profile() {
        let grid = make_graded_grid(1e-3, 1e3, 1.1, 1).unwrap();
        let f = Profile::from_fn(&grid, "f", |r| r.powf(-0.3) / (1.0 + r * r)).with_exponents(Some(-0.3), Some(-2.3));
        let m = moment_from(&f, 0.0, 0.0).unwrap();
        // int_0^inf r^{-0.3}/(1+r^2) dr = pi / (2 cos(0.15 pi))
        let want = PI / (2.0 * (0.15 * PI).cos());
        assert!((m / want - 1.0).abs() < 2e-4, "{m} {want}");
    }

    #[test]
    fn reduced_equation_matches_direct_duhamel_quadrature() {
        let p = ModelParams::from_delta(1, 0.5, 0.1).unwrap();
        let sol = psi1_fixed_point(&p, &coarse()).unwrap();
        let (a, delta) = (p.alpha, p.delta);
        let k = StableKernel::shared(1, a).unwrap();
        let x = 0.7;
        let psi = |r: f64, z: f64| r.powf((delta - 1.0) / a) * sol.psi1.eval(z.abs() * r.powf(-1.0 / a));
        let line = LineRule::new(8, 2.0, 1e4).with_tail(1.0 + 2.0 * a);
        let mut nodes = Vec::new();
        let inner = |r: f64, nodes: &mut Vec<(f64, f64)>| {
            let tau = 1.0 - r;
            line.build(&[(x, tau.powf(1.0 / a))], 1e-6 * r.powf(1.0 / a), delta + a, nodes);
            nodes.iter().map(|&(z, w)| w * psi(r, z) * p.potential(z) * k.density(tau, x - z)).sum::<f64>()
        };
        let rule = GaussRule::new(8);
        let mut total = 0.0;
        let mut lnr = 0.5f64.ln();
        while lnr > -70.0 {
            let lo = lnr - 0.5;
            for (u, w) in rule.points(lo, lnr) {
                let r = u.exp();
                total += w * r * inner(r, &mut nodes);
            }
            lnr = lo;
        }
        let mut b = 0.5;
        while b > 1e-9 {
            let lo = b / 3.0;
            for (tau, w) in rule.points(lo, b) {
                total += w * inner(1.0 - tau, &mut nodes);
            }
            b = lo;
        }
        total += 1e-9 * p.potential(x) * sol.psi1.eval(x);
        let want = sol.psi1.eval(x);
        assert!((total / want - 1.0).abs() < 3e-3, "{total} {want}");
    }

    #[test]
    fn time_potential_substitution_against_time_quadrature() {
        let p = ModelParams::from_delta(1, 0.5, 0.1).unwrap();
        let sol = psi1_fixed_point(&p, &coarse()).unwrap();
        let (x, t) = (0.8, 3.0f64);
        let rule = GaussRule::new(8);
        let mut direct = 0.0;
        let mut b = t.ln();
        while b > -80.0 {
            let a = b - 0.25;
            for (u, w) in rule.points(a, b) {
                let s = u.exp();
                direct += w * s * sol.psi_t(s, x).unwrap();
            }
            b = a;
        }
        let reduced = mu_t(&sol, t, x).unwrap();
        assert!((reduced / direct - 1.0).abs() < 1e-4, "{reduced} {direct}");
    }

    #[test]
    fn spherical_mean_integrates_to_one() {
        for d in [1usize, 2, 3] {
            let k = RadialKernel::new(d, 1.0).unwrap();
            let a = 0.6;
            let mut s = 0.0;
            let mut lo = 1e-6;
            while lo < 1e5 {
                let hi = lo * 1.5;
                s += GL8.integrate(lo, hi, |b| b.powi(d as i32 - 1) * k.eval(0.3, a, b));
                lo = hi;
            }
            assert!((s - 1.0).abs() < 2e-4, "d={d}: {s}");
        }
    }
}
